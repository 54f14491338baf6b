// Copyright 2026 The OmniSeg Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "tensorkit/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <utility>

#include "common/error.hpp"

namespace omniseg::tensor {

namespace {

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

void same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require(a.shape() == b.shape(), ErrorKind::kDimension,
          std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
              " vs " + shape_str(b.shape()));
}

void want_rank(const Tensor& t, int r, const char* op) {
  require(t.rank() == r, ErrorKind::kDimension,
          std::string(op) + ": expected rank " + std::to_string(r) +
              ", got " + shape_str(t.shape()));
}

// Accumulate helper: only touches inputs that take part in differentiation.
template <typename F>
void accumulate(const std::shared_ptr<Storage>& s, F&& body) {
  if (s->requires_grad) body(s->ensure_grad());
}

template <typename F>
Tensor unary(const char* op, const Tensor& x, F&& f_and_df) {
  const auto n = x.numel();
  std::vector<double> out(n);
  auto deriv = std::make_shared<std::vector<double>>(n);
  const auto xd = x.data();
  for (std::size_t i = 0; i < n; ++i) {
    auto [y, dy] = f_and_df(xd[i]);
    out[i] = y;
    (*deriv)[i] = dy;
  }
  auto xs = x.impl();
  return make_result(op, x.shape(), std::move(out), {x},
                     [xs, deriv](Storage& o) {
                       accumulate(xs, [&](std::vector<double>& g) {
                         for (std::size_t i = 0; i < g.size(); ++i)
                           g[i] += o.grad[i] * (*deriv)[i];
                       });
                     });
}

double stable_sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// Bilinear tap for one axis: coordinate in pixel-centre space, clamped to
// [0, extent-1]. `slope` is d(pixel coord)/d(normalized coord), zero when
// clamped.
struct AxisTap {
  int lo = 0;
  int hi = 0;
  double frac = 0.0;
  double slope = 0.0;
};

AxisTap axis_tap(double u, int extent) {
  AxisTap t;
  double x = u * extent - 0.5;
  t.slope = extent;
  if (x <= 0.0) {
    x = 0.0;
    t.slope = 0.0;
  } else if (x >= extent - 1) {
    x = extent - 1;
    t.slope = 0.0;
  }
  t.lo = static_cast<int>(std::floor(x));
  t.hi = std::min(t.lo + 1, extent - 1);
  t.frac = x - t.lo;
  return t;
}

// Source position for half-pixel-centre resizing with clamping.
AxisTap resize_tap(int out_index, int in_extent, int out_extent) {
  const double u = (out_index + 0.5) / out_extent;
  return axis_tap(u, in_extent);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  same_shape(a, b, "add");
  std::vector<double> out(a.data().begin(), a.data().end());
  const auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bd[i];
  auto as = a.impl(), bs = b.impl();
  return make_result("add", a.shape(), std::move(out), {a, b},
                     [as, bs](Storage& o) {
                       for (const auto& s : {as, bs}) {
                         accumulate(s, [&](std::vector<double>& g) {
                           for (std::size_t i = 0; i < g.size(); ++i)
                             g[i] += o.grad[i];
                         });
                       }
                     });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  same_shape(a, b, "sub");
  std::vector<double> out(a.data().begin(), a.data().end());
  const auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bd[i];
  auto as = a.impl(), bs = b.impl();
  return make_result("sub", a.shape(), std::move(out), {a, b},
                     [as, bs](Storage& o) {
                       accumulate(as, [&](std::vector<double>& g) {
                         for (std::size_t i = 0; i < g.size(); ++i)
                           g[i] += o.grad[i];
                       });
                       accumulate(bs, [&](std::vector<double>& g) {
                         for (std::size_t i = 0; i < g.size(); ++i)
                           g[i] -= o.grad[i];
                       });
                     });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  same_shape(a, b, "mul");
  const auto ad = a.data(), bd = b.data();
  std::vector<double> out(ad.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * bd[i];
  auto as = a.impl(), bs = b.impl();
  return make_result("mul", a.shape(), std::move(out), {a, b},
                     [as, bs](Storage& o) {
                       accumulate(as, [&](std::vector<double>& g) {
                         for (std::size_t i = 0; i < g.size(); ++i)
                           g[i] += o.grad[i] * bs->data[i];
                       });
                       accumulate(bs, [&](std::vector<double>& g) {
                         for (std::size_t i = 0; i < g.size(); ++i)
                           g[i] += o.grad[i] * as->data[i];
                       });
                     });
}

Tensor scale(const Tensor& a, double s) {
  return unary("scale", a, [s](double v) { return std::pair{v * s, s}; });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary("add_scalar", a,
               [s](double v) { return std::pair{v + s, 1.0}; });
}

Tensor gelu(const Tensor& x) {
  return unary("gelu", x, [](double v) {
    const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
    const double pdf =
        std::exp(-0.5 * v * v) / std::sqrt(2.0 * std::numbers::pi);
    return std::pair{v * cdf, cdf + v * pdf};
  });
}

Tensor relu(const Tensor& x) {
  return unary("relu", x, [](double v) {
    return v > 0 ? std::pair{v, 1.0} : std::pair{0.0, 0.0};
  });
}

Tensor sigmoid(const Tensor& x) {
  return unary("sigmoid", x, [](double v) {
    const double s = stable_sigmoid(v);
    return std::pair{s, s * (1.0 - s)};
  });
}

Tensor add_row(const Tensor& x, const Tensor& row) {
  want_rank(x, 2, "add_row");
  const int n = x.dim(0), d = x.dim(1);
  require(row.numel() == static_cast<std::size_t>(d), ErrorKind::kDimension,
          "add_row: row has " + std::to_string(row.numel()) +
              " values, need " + std::to_string(d));
  std::vector<double> out(x.data().begin(), x.data().end());
  const auto rd = row.data();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) out[i * d + j] += rd[j];
  auto xs = x.impl(), rs = row.impl();
  return make_result("add_row", x.shape(), std::move(out), {x, row},
                     [xs, rs, n, d](Storage& o) {
                       accumulate(xs, [&](std::vector<double>& g) {
                         for (std::size_t i = 0; i < g.size(); ++i)
                           g[i] += o.grad[i];
                       });
                       accumulate(rs, [&](std::vector<double>& g) {
                         for (int i = 0; i < n; ++i)
                           for (int j = 0; j < d; ++j)
                             g[j] += o.grad[i * d + j];
                       });
                     });
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  auto xs = x.impl();
  return make_result("sum", {1}, {total}, {x}, [xs](Storage& o) {
    accumulate(xs, [&](std::vector<double>& g) {
      for (double& v : g) v += o.grad[0];
    });
  });
}

Tensor mean(const Tensor& x) {
  const double n = static_cast<double>(x.numel());
  double total = 0.0;
  for (double v : x.data()) total += v;
  auto xs = x.impl();
  return make_result("mean", {1}, {total / n}, {x}, [xs, n](Storage& o) {
    accumulate(xs, [&](std::vector<double>& g) {
      for (double& v : g) v += o.grad[0] / n;
    });
  });
}

Tensor mean_rows(const Tensor& x) {
  want_rank(x, 2, "mean_rows");
  const int n = x.dim(0), d = x.dim(1);
  std::vector<double> out(d, 0.0);
  const auto xd = x.data();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) out[j] += xd[i * d + j];
  for (double& v : out) v /= n;
  auto xs = x.impl();
  return make_result("mean_rows", {1, d}, std::move(out), {x},
                     [xs, n, d](Storage& o) {
                       accumulate(xs, [&](std::vector<double>& g) {
                         for (int i = 0; i < n; ++i)
                           for (int j = 0; j < d; ++j)
                             g[i * d + j] += o.grad[j] / n;
                       });
                     });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  want_rank(a, 2, "matmul");
  want_rank(b, 2, "matmul");
  const int n = a.dim(0), k = a.dim(1), m = b.dim(1);
  require(b.dim(0) == k, ErrorKind::kDimension,
          "matmul: inner dims " + shape_str(a.shape()) + " x " +
              shape_str(b.shape()));
  std::vector<double> out(static_cast<std::size_t>(n) * m);
  MapMat(out.data(), n, m).noalias() =
      CMapMat(a.data().data(), n, k) * CMapMat(b.data().data(), k, m);
  auto as = a.impl(), bs = b.impl();
  return make_result(
      "matmul", {n, m}, std::move(out), {a, b},
      [as, bs, n, k, m](Storage& o) {
        CMapMat go(o.grad.data(), n, m);
        accumulate(as, [&](std::vector<double>& g) {
          MapMat(g.data(), n, k).noalias() +=
              go * CMapMat(bs->data.data(), k, m).transpose();
        });
        accumulate(bs, [&](std::vector<double>& g) {
          MapMat(g.data(), k, m).noalias() +=
              CMapMat(as->data.data(), n, k).transpose() * go;
        });
      });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  want_rank(a, 2, "matmul_nt");
  want_rank(b, 2, "matmul_nt");
  const int n = a.dim(0), k = a.dim(1), m = b.dim(0);
  require(b.dim(1) == k, ErrorKind::kDimension,
          "matmul_nt: inner dims " + shape_str(a.shape()) + " x " +
              shape_str(b.shape()) + "^T");
  std::vector<double> out(static_cast<std::size_t>(n) * m);
  MapMat(out.data(), n, m).noalias() =
      CMapMat(a.data().data(), n, k) *
      CMapMat(b.data().data(), m, k).transpose();
  auto as = a.impl(), bs = b.impl();
  return make_result(
      "matmul_nt", {n, m}, std::move(out), {a, b},
      [as, bs, n, k, m](Storage& o) {
        CMapMat go(o.grad.data(), n, m);
        accumulate(as, [&](std::vector<double>& g) {
          MapMat(g.data(), n, k).noalias() +=
              go * CMapMat(bs->data.data(), m, k);
        });
        accumulate(bs, [&](std::vector<double>& g) {
          MapMat(g.data(), m, k).noalias() +=
              go.transpose() * CMapMat(as->data.data(), n, k);
        });
      });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  want_rank(x, 2, "linear");
  want_rank(w, 2, "linear");
  const int n = x.dim(0), in = x.dim(1), out_dim = w.dim(1);
  require(w.dim(0) == in, ErrorKind::kDimension,
          "linear: input " + shape_str(x.shape()) + " vs weight " +
              shape_str(w.shape()));
  const bool has_bias = b.defined();
  if (has_bias) {
    require(b.numel() == static_cast<std::size_t>(out_dim),
            ErrorKind::kDimension, "linear: bias size mismatch");
  }
  std::vector<double> out(static_cast<std::size_t>(n) * out_dim);
  MapMat mo(out.data(), n, out_dim);
  mo.noalias() =
      CMapMat(x.data().data(), n, in) * CMapMat(w.data().data(), in, out_dim);
  if (has_bias) {
    mo.rowwise() +=
        Eigen::Map<const Eigen::RowVectorXd>(b.data().data(), out_dim);
  }
  auto xs = x.impl(), ws = w.impl();
  auto bs = has_bias ? b.impl() : nullptr;
  return make_result(
      "linear", {n, out_dim}, std::move(out), {x, w, b},
      [xs, ws, bs, n, in, out_dim](Storage& o) {
        CMapMat go(o.grad.data(), n, out_dim);
        accumulate(xs, [&](std::vector<double>& g) {
          MapMat(g.data(), n, in).noalias() +=
              go * CMapMat(ws->data.data(), in, out_dim).transpose();
        });
        accumulate(ws, [&](std::vector<double>& g) {
          MapMat(g.data(), in, out_dim).noalias() +=
              CMapMat(xs->data.data(), n, in).transpose() * go;
        });
        if (bs) {
          accumulate(bs, [&](std::vector<double>& g) {
            for (int r = 0; r < n; ++r)
              for (int c = 0; c < out_dim; ++c) g[c] += go(r, c);
          });
        }
      });
}

Tensor transpose(const Tensor& x) {
  want_rank(x, 2, "transpose");
  const int r = x.dim(0), c = x.dim(1);
  std::vector<double> out(x.numel());
  MapMat(out.data(), c, r) = CMapMat(x.data().data(), r, c).transpose();
  auto xs = x.impl();
  return make_result("transpose", {c, r}, std::move(out), {x},
                     [xs, r, c](Storage& o) {
                       accumulate(xs, [&](std::vector<double>& g) {
                         MapMat(g.data(), r, c) +=
                             CMapMat(o.grad.data(), c, r).transpose();
                       });
                     });
}

Tensor reshape(const Tensor& x, Shape shape) {
  require(numel_of(shape) == x.numel(), ErrorKind::kDimension,
          "reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
  std::vector<double> out(x.data().begin(), x.data().end());
  auto xs = x.impl();
  return make_result("reshape", std::move(shape), std::move(out), {x},
                     [xs](Storage& o) {
                       accumulate(xs, [&](std::vector<double>& g) {
                         for (std::size_t i = 0; i < g.size(); ++i)
                           g[i] += o.grad[i];
                       });
                     });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  require(!parts.empty(), ErrorKind::kUsage, "concat_rows: no inputs");
  const int d = parts.front().dim(1);
  int rows = 0;
  for (const auto& p : parts) {
    want_rank(p, 2, "concat_rows");
    require(p.dim(1) == d, ErrorKind::kDimension,
            "concat_rows: column mismatch");
    rows += p.dim(0);
  }
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(rows) * d);
  std::vector<std::shared_ptr<Storage>> stores;
  for (const auto& p : parts) {
    out.insert(out.end(), p.data().begin(), p.data().end());
    stores.push_back(p.impl());
  }
  return make_result("concat_rows", {rows, d}, std::move(out), parts,
                     [stores](Storage& o) {
                       std::size_t offset = 0;
                       for (const auto& s : stores) {
                         accumulate(s, [&](std::vector<double>& g) {
                           for (std::size_t i = 0; i < g.size(); ++i)
                             g[i] += o.grad[offset + i];
                         });
                         offset += s->data.size();
                       }
                     });
}

Tensor embedding(const Tensor& table, const std::vector<int>& ids) {
  want_rank(table, 2, "embedding");
  const int vocab = table.dim(0), d = table.dim(1);
  const int n = static_cast<int>(ids.size());
  require(n > 0, ErrorKind::kUsage, "embedding: empty id list");
  std::vector<double> out(static_cast<std::size_t>(n) * d);
  const auto td = table.data();
  for (int i = 0; i < n; ++i) {
    require(ids[i] >= 0 && ids[i] < vocab, ErrorKind::kInvalidArgument,
            "embedding: id " + std::to_string(ids[i]) + " outside vocab");
    std::copy_n(td.begin() + static_cast<std::ptrdiff_t>(ids[i]) * d, d,
                out.begin() + static_cast<std::ptrdiff_t>(i) * d);
  }
  auto ts = table.impl();
  return make_result("embedding", {n, d}, std::move(out), {table},
                     [ts, ids, d](Storage& o) {
                       accumulate(ts, [&](std::vector<double>& g) {
                         for (std::size_t i = 0; i < ids.size(); ++i)
                           for (int j = 0; j < d; ++j)
                             g[ids[i] * d + j] += o.grad[i * d + j];
                       });
                     });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps) {
  want_rank(x, 2, "layer_norm");
  const int n = x.dim(0), d = x.dim(1);
  require(gamma.numel() == static_cast<std::size_t>(d) &&
              beta.numel() == static_cast<std::size_t>(d),
          ErrorKind::kDimension, "layer_norm: affine size mismatch");
  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  auto inv_std = std::make_shared<std::vector<double>>(n);
  std::vector<double> out(x.numel());
  const auto xd = x.data(), gd = gamma.data(), bd = beta.data();
  for (int i = 0; i < n; ++i) {
    double mu = 0.0;
    for (int j = 0; j < d; ++j) mu += xd[i * d + j];
    mu /= d;
    double var = 0.0;
    for (int j = 0; j < d; ++j) {
      const double c = xd[i * d + j] - mu;
      var += c * c;
    }
    var /= d;
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[i] = is;
    for (int j = 0; j < d; ++j) {
      const double h = (xd[i * d + j] - mu) * is;
      (*xhat)[i * d + j] = h;
      out[i * d + j] = h * gd[j] + bd[j];
    }
  }
  auto xs = x.impl(), gs = gamma.impl(), bs = beta.impl();
  return make_result(
      "layer_norm", x.shape(), std::move(out), {x, gamma, beta},
      [xs, gs, bs, xhat, inv_std, n, d](Storage& o) {
        accumulate(gs, [&](std::vector<double>& g) {
          for (int i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j)
              g[j] += o.grad[i * d + j] * (*xhat)[i * d + j];
        });
        accumulate(bs, [&](std::vector<double>& g) {
          for (int i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j) g[j] += o.grad[i * d + j];
        });
        accumulate(xs, [&](std::vector<double>& g) {
          for (int i = 0; i < n; ++i) {
            double mean_dh = 0.0, mean_dh_h = 0.0;
            for (int j = 0; j < d; ++j) {
              const double dh = o.grad[i * d + j] * gs->data[j];
              mean_dh += dh;
              mean_dh_h += dh * (*xhat)[i * d + j];
            }
            mean_dh /= d;
            mean_dh_h /= d;
            for (int j = 0; j < d; ++j) {
              const double dh = o.grad[i * d + j] * gs->data[j];
              g[i * d + j] += (*inv_std)[i] *
                              (dh - mean_dh - (*xhat)[i * d + j] * mean_dh_h);
            }
          }
        });
      });
}

Tensor softmax_groups(const Tensor& x, int group) {
  require(group > 0 && x.numel() % static_cast<std::size_t>(group) == 0,
          ErrorKind::kDimension, "softmax_groups: bad group size");
  const std::size_t chunks = x.numel() / group;
  std::vector<double> out(x.numel());
  const auto xd = x.data();
  for (std::size_t c = 0; c < chunks; ++c) {
    const double* in = xd.data() + c * group;
    double* o = out.data() + c * group;
    const double mx = *std::max_element(in, in + group);
    double z = 0.0;
    for (int j = 0; j < group; ++j) z += (o[j] = std::exp(in[j] - mx));
    for (int j = 0; j < group; ++j) o[j] /= z;
  }
  auto xs = x.impl();
  auto saved = std::make_shared<std::vector<double>>(out);
  return make_result("softmax_groups", x.shape(), std::move(out), {x},
                     [xs, saved, chunks, group](Storage& o) {
                       accumulate(xs, [&](std::vector<double>& g) {
                         for (std::size_t c = 0; c < chunks; ++c) {
                           const double* y = saved->data() + c * group;
                           const double* gy = o.grad.data() + c * group;
                           double dot = 0.0;
                           for (int j = 0; j < group; ++j) dot += y[j] * gy[j];
                           for (int j = 0; j < group; ++j)
                             g[c * group + j] += y[j] * (gy[j] - dot);
                         }
                       });
                     });
}

Tensor attention_core(const Tensor& q, const Tensor& k, const Tensor& v,
                      int heads, const std::vector<std::uint8_t>& key_valid,
                      std::vector<double>* weights_out) {
  want_rank(q, 2, "attention");
  want_rank(k, 2, "attention");
  want_rank(v, 2, "attention");
  const int n = q.dim(0), d = q.dim(1), m = k.dim(0);
  require(k.dim(1) == d && v.dim(1) == d && v.dim(0) == m,
          ErrorKind::kDimension, "attention: q/k/v shape mismatch");
  require(heads > 0 && d % heads == 0, ErrorKind::kConfig,
          "attention: model dim " + std::to_string(d) +
              " not divisible by heads " + std::to_string(heads));
  require(key_valid.empty() || key_valid.size() == static_cast<std::size_t>(m),
          ErrorKind::kDimension, "attention: key mask length mismatch");
  const bool masked = !key_valid.empty();
  if (masked) {
    require(std::any_of(key_valid.begin(), key_valid.end(),
                        [](std::uint8_t b) { return b != 0; }),
            ErrorKind::kUsage, "attention: every key is masked out");
  }
  const int dh = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  CMapMat Q(q.data().data(), n, d), K(k.data().data(), m, d),
      V(v.data().data(), m, d);
  auto probs = std::make_shared<std::vector<double>>(
      static_cast<std::size_t>(heads) * n * m);
  std::vector<double> out(static_cast<std::size_t>(n) * d);
  MapMat O(out.data(), n, d);
  for (int h = 0; h < heads; ++h) {
    MapMat A(probs->data() + static_cast<std::size_t>(h) * n * m, n, m);
    A.noalias() = Q.middleCols(h * dh, dh) *
                  K.middleCols(h * dh, dh).transpose();
    A *= inv_sqrt;
    for (int i = 0; i < n; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (int j = 0; j < m; ++j)
        if (!masked || key_valid[j]) mx = std::max(mx, A(i, j));
      double z = 0.0;
      for (int j = 0; j < m; ++j) {
        const double e = (!masked || key_valid[j]) ? std::exp(A(i, j) - mx)
                                                   : 0.0;
        A(i, j) = e;
        z += e;
      }
      A.row(i) /= z;
    }
    O.middleCols(h * dh, dh).noalias() = A * V.middleCols(h * dh, dh);
  }
  if (weights_out) *weights_out = *probs;

  auto qs = q.impl(), ks = k.impl(), vs = v.impl();
  return make_result(
      "attention", {n, d}, std::move(out), {q, k, v},
      [qs, ks, vs, probs, n, m, d, dh, heads, inv_sqrt](Storage& o) {
        CMapMat GO(o.grad.data(), n, d);
        CMapMat Q(qs->data.data(), n, d), K(ks->data.data(), m, d),
            V(vs->data.data(), m, d);
        RowMat dA(n, m);
        for (int h = 0; h < heads; ++h) {
          CMapMat A(probs->data() + static_cast<std::size_t>(h) * n * m, n,
                    m);
          const auto go_h = GO.middleCols(h * dh, dh);
          accumulate(vs, [&](std::vector<double>& g) {
            MapMat(g.data(), m, d).middleCols(h * dh, dh).noalias() +=
                A.transpose() * go_h;
          });
          if (!qs->requires_grad && !ks->requires_grad) continue;
          dA.noalias() = go_h * V.middleCols(h * dh, dh).transpose();
          // Softmax Jacobian; masked entries have A == 0 and stay zero.
          for (int i = 0; i < n; ++i) {
            const double dot = A.row(i).dot(dA.row(i));
            dA.row(i) = A.row(i).cwiseProduct(
                (dA.row(i).array() - dot).matrix());
          }
          dA *= inv_sqrt;
          accumulate(qs, [&](std::vector<double>& g) {
            MapMat(g.data(), n, d).middleCols(h * dh, dh).noalias() +=
                dA * K.middleCols(h * dh, dh);
          });
          accumulate(ks, [&](std::vector<double>& g) {
            MapMat(g.data(), m, d).middleCols(h * dh, dh).noalias() +=
                dA.transpose() * Q.middleCols(h * dh, dh);
          });
        }
      });
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
              int pad) {
  want_rank(x, 4, "conv2d");
  want_rank(w, 4, "conv2d");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int Co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  require(w.dim(1) == C, ErrorKind::kDimension,
          "conv2d: input channels " + std::to_string(C) +
              " vs kernel " + shape_str(w.shape()));
  require(stride >= 1 && pad >= 0, ErrorKind::kInvalidArgument,
          "conv2d: stride must be >= 1 and pad >= 0");
  require(kh <= H + 2 * pad && kw <= W + 2 * pad, ErrorKind::kDimension,
          "conv2d: kernel larger than padded input");
  const bool has_bias = b.defined();
  if (has_bias) {
    require(b.numel() == static_cast<std::size_t>(Co), ErrorKind::kDimension,
            "conv2d: bias size mismatch");
  }
  const int Ho = (H + 2 * pad - kh) / stride + 1;
  const int Wo = (W + 2 * pad - kw) / stride + 1;
  const int K = C * kh * kw, P = Ho * Wo;

  // cols[n] is [K, P]
  auto cols = std::make_shared<std::vector<double>>(
      static_cast<std::size_t>(N) * K * P, 0.0);
  const auto xd = x.data();
  for (int n = 0; n < N; ++n) {
    double* cn = cols->data() + static_cast<std::size_t>(n) * K * P;
    for (int c = 0; c < C; ++c)
      for (int dy = 0; dy < kh; ++dy)
        for (int dx = 0; dx < kw; ++dx) {
          double* row = cn + static_cast<std::size_t>((c * kh + dy) * kw + dx) * P;
          for (int oy = 0; oy < Ho; ++oy) {
            const int iy = oy * stride - pad + dy;
            if (iy < 0 || iy >= H) continue;
            const double* src =
                xd.data() + ((static_cast<std::size_t>(n) * C + c) * H + iy) * W;
            for (int ox = 0; ox < Wo; ++ox) {
              const int ix = ox * stride - pad + dx;
              if (ix >= 0 && ix < W) row[oy * Wo + ox] = src[ix];
            }
          }
        }
  }
  std::vector<double> out(static_cast<std::size_t>(N) * Co * P);
  CMapMat Wm(w.data().data(), Co, K);
  for (int n = 0; n < N; ++n) {
    MapMat On(out.data() + static_cast<std::size_t>(n) * Co * P, Co, P);
    On.noalias() =
        Wm * CMapMat(cols->data() + static_cast<std::size_t>(n) * K * P, K, P);
    if (has_bias) {
      On.colwise() += Eigen::Map<const Eigen::VectorXd>(b.data().data(), Co);
    }
  }
  auto xs = x.impl(), ws = w.impl();
  auto bs = has_bias ? b.impl() : nullptr;
  return make_result(
      "conv2d", {N, Co, Ho, Wo}, std::move(out), {x, w, b},
      [=](Storage& o) {
        for (int n = 0; n < N; ++n) {
          CMapMat Gn(o.grad.data() + static_cast<std::size_t>(n) * Co * P, Co,
                     P);
          CMapMat Cn(cols->data() + static_cast<std::size_t>(n) * K * P, K, P);
          accumulate(ws, [&](std::vector<double>& g) {
            MapMat(g.data(), Co, K).noalias() += Gn * Cn.transpose();
          });
          if (bs) {
            accumulate(bs, [&](std::vector<double>& g) {
              for (int c = 0; c < Co; ++c) {
                double acc = 0.0;
                for (int p = 0; p < P; ++p) acc += Gn(c, p);
                g[c] += acc;
              }
            });
          }
          accumulate(xs, [&](std::vector<double>& g) {
            RowMat dcols = CMapMat(ws->data.data(), Co, K).transpose() * Gn;
            for (int c = 0; c < C; ++c)
              for (int dy = 0; dy < kh; ++dy)
                for (int dx = 0; dx < kw; ++dx) {
                  const double* row = dcols.data() +
                      static_cast<std::size_t>((c * kh + dy) * kw + dx) * P;
                  for (int oy = 0; oy < Ho; ++oy) {
                    const int iy = oy * stride - pad + dy;
                    if (iy < 0 || iy >= H) continue;
                    double* dst = g.data() +
                        ((static_cast<std::size_t>(n) * C + c) * H + iy) * W;
                    for (int ox = 0; ox < Wo; ++ox) {
                      const int ix = ox * stride - pad + dx;
                      if (ix >= 0 && ix < W) dst[ix] += row[oy * Wo + ox];
                    }
                  }
                }
          });
        }
      });
}

Tensor resize_nearest(const Tensor& x, int out_h, int out_w) {
  want_rank(x, 3, "resize_nearest");
  const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
  require(out_h >= 1 && out_w >= 1, ErrorKind::kInvalidArgument,
          "resize_nearest: output size must be positive");
  auto src = std::make_shared<std::vector<int>>(
      static_cast<std::size_t>(out_h) * out_w);
  for (int i = 0; i < out_h; ++i)
    for (int j = 0; j < out_w; ++j) {
      const int si = std::min(H - 1, static_cast<int>(
          (static_cast<long long>(i) * H) / out_h));
      const int sj = std::min(W - 1, static_cast<int>(
          (static_cast<long long>(j) * W) / out_w));
      (*src)[i * out_w + j] = si * W + sj;
    }
  const int P = out_h * out_w;
  std::vector<double> out(static_cast<std::size_t>(C) * P);
  const auto xd = x.data();
  for (int c = 0; c < C; ++c)
    for (int p = 0; p < P; ++p) out[c * P + p] = xd[c * H * W + (*src)[p]];
  auto xs = x.impl();
  return make_result("resize_nearest", {C, out_h, out_w}, std::move(out), {x},
                     [xs, src, C, P, H, W](Storage& o) {
                       accumulate(xs, [&](std::vector<double>& g) {
                         for (int c = 0; c < C; ++c)
                           for (int p = 0; p < P; ++p)
                             g[c * H * W + (*src)[p]] += o.grad[c * P + p];
                       });
                     });
}

Tensor resize_bilinear(const Tensor& x, int out_h, int out_w) {
  want_rank(x, 3, "resize_bilinear");
  const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
  require(out_h >= 1 && out_w >= 1, ErrorKind::kInvalidArgument,
          "resize_bilinear: output size must be positive");
  std::vector<AxisTap> ty(out_h), tx(out_w);
  for (int i = 0; i < out_h; ++i) ty[i] = resize_tap(i, H, out_h);
  for (int j = 0; j < out_w; ++j) tx[j] = resize_tap(j, W, out_w);
  const int P = out_h * out_w;
  std::vector<double> out(static_cast<std::size_t>(C) * P);
  const auto xd = x.data();
  for (int c = 0; c < C; ++c) {
    const double* m = xd.data() + static_cast<std::size_t>(c) * H * W;
    for (int i = 0; i < out_h; ++i)
      for (int j = 0; j < out_w; ++j) {
        const AxisTap& a = ty[i];
        const AxisTap& b = tx[j];
        out[c * P + i * out_w + j] =
            (1 - a.frac) * ((1 - b.frac) * m[a.lo * W + b.lo] +
                            b.frac * m[a.lo * W + b.hi]) +
            a.frac * ((1 - b.frac) * m[a.hi * W + b.lo] +
                      b.frac * m[a.hi * W + b.hi]);
      }
  }
  auto xs = x.impl();
  return make_result(
      "resize_bilinear", {C, out_h, out_w}, std::move(out), {x},
      [xs, ty = std::move(ty), tx = std::move(tx), C, H, W, out_h,
       out_w](Storage& o) {
        accumulate(xs, [&](std::vector<double>& g) {
          const int P = out_h * out_w;
          for (int c = 0; c < C; ++c) {
            double* m = g.data() + static_cast<std::size_t>(c) * H * W;
            for (int i = 0; i < out_h; ++i)
              for (int j = 0; j < out_w; ++j) {
                const double go = o.grad[c * P + i * out_w + j];
                const AxisTap& a = ty[i];
                const AxisTap& b = tx[j];
                m[a.lo * W + b.lo] += go * (1 - a.frac) * (1 - b.frac);
                m[a.lo * W + b.hi] += go * (1 - a.frac) * b.frac;
                m[a.hi * W + b.lo] += go * a.frac * (1 - b.frac);
                m[a.hi * W + b.hi] += go * a.frac * b.frac;
              }
          }
        });
      });
}

Tensor bilinear_sample(const Tensor& featmap, const Tensor& points) {
  want_rank(featmap, 3, "bilinear_sample");
  want_rank(points, 2, "bilinear_sample");
  require(points.dim(1) == 2, ErrorKind::kDimension,
          "bilinear_sample: points must be [P, 2]");
  const int C = featmap.dim(0), H = featmap.dim(1), W = featmap.dim(2);
  const int P = points.dim(0);
  const auto pd = points.data();
  for (double v : pd) {
    require(std::isfinite(v), ErrorKind::kNumeric,
            "bilinear_sample: non-finite sampling point");
  }
  std::vector<double> out(static_cast<std::size_t>(P) * C);
  const auto fd = featmap.data();
  for (int p = 0; p < P; ++p) {
    const AxisTap tx = axis_tap(pd[2 * p], W);
    const AxisTap ty = axis_tap(pd[2 * p + 1], H);
    for (int c = 0; c < C; ++c) {
      const double* m = fd.data() + static_cast<std::size_t>(c) * H * W;
      out[p * C + c] =
          (1 - ty.frac) * ((1 - tx.frac) * m[ty.lo * W + tx.lo] +
                           tx.frac * m[ty.lo * W + tx.hi]) +
          ty.frac * ((1 - tx.frac) * m[ty.hi * W + tx.lo] +
                     tx.frac * m[ty.hi * W + tx.hi]);
    }
  }
  auto fs = featmap.impl(), ps = points.impl();
  return make_result(
      "bilinear_sample", {P, C}, std::move(out), {featmap, points},
      [fs, ps, C, H, W, P](Storage& o) {
        for (int p = 0; p < P; ++p) {
          const AxisTap tx = axis_tap(ps->data[2 * p], W);
          const AxisTap ty = axis_tap(ps->data[2 * p + 1], H);
          double dfx = 0.0, dfy = 0.0;
          for (int c = 0; c < C; ++c) {
            const double go = o.grad[p * C + c];
            const double* m = fs->data.data() + static_cast<std::size_t>(c) * H * W;
            const double v00 = m[ty.lo * W + tx.lo], v01 = m[ty.lo * W + tx.hi];
            const double v10 = m[ty.hi * W + tx.lo], v11 = m[ty.hi * W + tx.hi];
            dfx += go * ((1 - ty.frac) * (v01 - v00) + ty.frac * (v11 - v10));
            dfy += go * ((1 - tx.frac) * (v10 - v00) + tx.frac * (v11 - v01));
          }
          accumulate(fs, [&](std::vector<double>& g) {
            for (int c = 0; c < C; ++c) {
              const double go = o.grad[p * C + c];
              double* m = g.data() + static_cast<std::size_t>(c) * H * W;
              m[ty.lo * W + tx.lo] += go * (1 - ty.frac) * (1 - tx.frac);
              m[ty.lo * W + tx.hi] += go * (1 - ty.frac) * tx.frac;
              m[ty.hi * W + tx.lo] += go * ty.frac * (1 - tx.frac);
              m[ty.hi * W + tx.hi] += go * ty.frac * tx.frac;
            }
          });
          accumulate(ps, [&](std::vector<double>& g) {
            g[2 * p] += dfx * tx.slope;
            g[2 * p + 1] += dfy * ty.slope;
          });
        }
      });
}

Tensor ms_deform_sample(const Tensor& value,
                        const std::vector<LevelShape>& levels,
                        const Tensor& locations, const Tensor& weights,
                        int heads, int points) {
  want_rank(value, 2, "ms_deform_sample");
  want_rank(locations, 2, "ms_deform_sample");
  want_rank(weights, 2, "ms_deform_sample");
  const int T = value.dim(0), d = value.dim(1);
  const int L = static_cast<int>(levels.size());
  const int n = locations.dim(0);
  require(heads > 0 && d % heads == 0, ErrorKind::kConfig,
          "ms_deform_sample: dim not divisible by heads");
  require(L > 0 && points > 0, ErrorKind::kConfig,
          "ms_deform_sample: need at least one level and point");
  const int S = heads * L * points;
  require(locations.dim(1) == 2 * S && weights.dim(0) == n &&
              weights.dim(1) == S,
          ErrorKind::kDimension, "ms_deform_sample: location/weight layout");
  int tokens = 0;
  for (const auto& lv : levels) {
    require(lv.start == tokens, ErrorKind::kDimension,
            "ms_deform_sample: level start offsets must be contiguous");
    tokens += lv.height * lv.width;
  }
  require(tokens == T, ErrorKind::kDimension,
          "ms_deform_sample: level sizes do not cover the value tokens");
  for (double v : locations.data()) {
    require(std::isfinite(v), ErrorKind::kNumeric,
            "ms_deform_sample: non-finite sampling location");
  }
  const int dh = d / heads;
  const auto vd = value.data(), ld = locations.data(), wd = weights.data();
  std::vector<double> out(static_cast<std::size_t>(n) * d, 0.0);
  for (int q = 0; q < n; ++q)
    for (int h = 0; h < heads; ++h)
      for (int l = 0; l < L; ++l) {
        const LevelShape& lv = levels[l];
        for (int p = 0; p < points; ++p) {
          const int s = (h * L + l) * points + p;
          const AxisTap tx = axis_tap(ld[q * 2 * S + 2 * s], lv.width);
          const AxisTap ty = axis_tap(ld[q * 2 * S + 2 * s + 1], lv.height);
          const double w = wd[q * S + s];
          const double w00 = w * (1 - ty.frac) * (1 - tx.frac);
          const double w01 = w * (1 - ty.frac) * tx.frac;
          const double w10 = w * ty.frac * (1 - tx.frac);
          const double w11 = w * ty.frac * tx.frac;
          const double* r00 = vd.data() + static_cast<std::size_t>(lv.start + ty.lo * lv.width + tx.lo) * d + h * dh;
          const double* r01 = vd.data() + static_cast<std::size_t>(lv.start + ty.lo * lv.width + tx.hi) * d + h * dh;
          const double* r10 = vd.data() + static_cast<std::size_t>(lv.start + ty.hi * lv.width + tx.lo) * d + h * dh;
          const double* r11 = vd.data() + static_cast<std::size_t>(lv.start + ty.hi * lv.width + tx.hi) * d + h * dh;
          double* o = out.data() + static_cast<std::size_t>(q) * d + h * dh;
          for (int c = 0; c < dh; ++c)
            o[c] += w00 * r00[c] + w01 * r01[c] + w10 * r10[c] + w11 * r11[c];
        }
      }
  auto vs = value.impl(), ls = locations.impl(), ws = weights.impl();
  return make_result(
      "ms_deform_sample", {n, d}, std::move(out), {value, locations, weights},
      [vs, ls, ws, levels, n, d, L, S, heads, points, dh](Storage& o) {
        std::vector<double>* gv = vs->requires_grad ? &vs->ensure_grad() : nullptr;
        std::vector<double>* gl = ls->requires_grad ? &ls->ensure_grad() : nullptr;
        std::vector<double>* gw = ws->requires_grad ? &ws->ensure_grad() : nullptr;
        const double* vd = vs->data.data();
        for (int q = 0; q < n; ++q)
          for (int h = 0; h < heads; ++h)
            for (int l = 0; l < L; ++l) {
              const LevelShape& lv = levels[l];
              for (int p = 0; p < points; ++p) {
                const int s = (h * L + l) * points + p;
                const AxisTap tx = axis_tap(ls->data[q * 2 * S + 2 * s], lv.width);
                const AxisTap ty = axis_tap(ls->data[q * 2 * S + 2 * s + 1], lv.height);
                const double w = ws->data[q * S + s];
                const std::size_t i00 = static_cast<std::size_t>(lv.start + ty.lo * lv.width + tx.lo) * d + h * dh;
                const std::size_t i01 = static_cast<std::size_t>(lv.start + ty.lo * lv.width + tx.hi) * d + h * dh;
                const std::size_t i10 = static_cast<std::size_t>(lv.start + ty.hi * lv.width + tx.lo) * d + h * dh;
                const std::size_t i11 = static_cast<std::size_t>(lv.start + ty.hi * lv.width + tx.hi) * d + h * dh;
                const double* go = o.grad.data() + static_cast<std::size_t>(q) * d + h * dh;
                double sampled_dot = 0.0, dfx = 0.0, dfy = 0.0;
                for (int c = 0; c < dh; ++c) {
                  const double v00 = vd[i00 + c], v01 = vd[i01 + c];
                  const double v10 = vd[i10 + c], v11 = vd[i11 + c];
                  const double sample =
                      (1 - ty.frac) * ((1 - tx.frac) * v00 + tx.frac * v01) +
                      ty.frac * ((1 - tx.frac) * v10 + tx.frac * v11);
                  sampled_dot += go[c] * sample;
                  dfx += go[c] * ((1 - ty.frac) * (v01 - v00) + ty.frac * (v11 - v10));
                  dfy += go[c] * ((1 - tx.frac) * (v10 - v00) + tx.frac * (v11 - v01));
                }
                if (gw) (*gw)[q * S + s] += sampled_dot;
                if (gl) {
                  (*gl)[q * 2 * S + 2 * s] += w * dfx * tx.slope;
                  (*gl)[q * 2 * S + 2 * s + 1] += w * dfy * ty.slope;
                }
                if (gv) {
                  const double w00 = w * (1 - ty.frac) * (1 - tx.frac);
                  const double w01 = w * (1 - ty.frac) * tx.frac;
                  const double w10 = w * ty.frac * (1 - tx.frac);
                  const double w11 = w * ty.frac * tx.frac;
                  for (int c = 0; c < dh; ++c) {
                    (*gv)[i00 + c] += w00 * go[c];
                    (*gv)[i01 + c] += w01 * go[c];
                    (*gv)[i10 + c] += w10 * go[c];
                    (*gv)[i11 + c] += w11 * go[c];
                  }
                }
              }
            }
      });
}

Tensor bce_with_logits(const Tensor& logits,
                       const std::vector<double>& targets) {
  require(logits.numel() == targets.size(), ErrorKind::kDimension,
          "bce_with_logits: " + std::to_string(logits.numel()) +
              " logits vs " + std::to_string(targets.size()) + " targets");
  const auto zd = logits.data();
  const double n = static_cast<double>(targets.size());
  double total = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const double z = zd[i];
    total += std::max(z, 0.0) - z * targets[i] +
             std::log1p(std::exp(-std::abs(z)));
  }
  auto zs = logits.impl();
  auto t = std::make_shared<std::vector<double>>(targets);
  return make_result("bce_with_logits", {1}, {total / n}, {logits},
                     [zs, t, n](Storage& o) {
                       accumulate(zs, [&](std::vector<double>& g) {
                         for (std::size_t i = 0; i < g.size(); ++i)
                           g[i] += o.grad[0] *
                                   (stable_sigmoid(zs->data[i]) - (*t)[i]) / n;
                       });
                     });
}

}  // namespace omniseg::tensor
