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

// Differentiable operations. Matrices are row-major [rows, cols]; feature
// maps are [C, H, W] (or [N, C, H, W] for conv2d).

#pragma once

#include <cstdint>
#include <vector>

#include "tensorkit/tensor.hpp"

namespace omniseg::tensor {

// Elementwise.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor gelu(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

// x[n, d] + row[d]. `row` may be shaped [d] or [1, d].
Tensor add_row(const Tensor& x, const Tensor& row);

// Reductions.
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor mean_rows(const Tensor& x);  // [n, d] -> [1, d]

// Linear algebra.
Tensor matmul(const Tensor& a, const Tensor& b);     // [n,k] x [k,m]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // [n,k] x [m,k]^T
// x[n, in] * w[in, out] + b[out]; `b` may be undefined.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);
Tensor transpose(const Tensor& x);  // [a, b] -> [b, a]

// Shape plumbing (values are copied).
Tensor reshape(const Tensor& x, Shape shape);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor embedding(const Tensor& table, const std::vector<int>& ids);

// Normalization and softmax.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);
// Softmax over each contiguous chunk of `group` columns.
Tensor softmax_groups(const Tensor& x, int group);

// Multi-head scaled dot-product attention core (no projections).
// q[n,d], k[m,d], v[m,d]; key_valid[j] == 0 excludes key j entirely.
// Returns concat over heads of softmax(q_h k_h^T / sqrt(d/heads)) v_h.
// When `weights_out` is non-null it receives [heads][n][m] weights.
Tensor attention_core(const Tensor& q, const Tensor& k, const Tensor& v,
                      int heads, const std::vector<std::uint8_t>& key_valid,
                      std::vector<double>* weights_out = nullptr);

// Convolution (cross-correlation). x[N,C,H,W], w[Co,C,kh,kw], b[Co] or
// undefined.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
              int pad);

// Resampling of [C,H,W] maps.
Tensor resize_nearest(const Tensor& x, int out_h, int out_w);
// Half-pixel-centre bilinear interpolation with border clamping.
Tensor resize_bilinear(const Tensor& x, int out_h, int out_w);

// Samples featmap[C,H,W] at points[P,2] holding normalized (x, y) in [0,1].
// Pixel centres sit at (j + 0.5) / W; coordinates outside the centre range
// are clamped to the border. Returns [P, C].
Tensor bilinear_sample(const Tensor& featmap, const Tensor& points);

struct LevelShape {
  int height = 0;
  int width = 0;
  int start = 0;  // first token index of this level in the value tensor
};

// Multi-scale deformable sampling core. value[T, d] holds the token
// sequence of all levels; head h owns channels [h*dh, (h+1)*dh).
// locations[n, heads*L*P*2] are normalized (x, y) pairs laid out as
// ((h*L + l)*P + p)*2; weights[n, heads*L*P] use the same order.
// out[q, h*dh + c] = sum_{l,p} w * bilinear(value_l[:, h], loc).
Tensor ms_deform_sample(const Tensor& value,
                        const std::vector<LevelShape>& levels,
                        const Tensor& locations, const Tensor& weights,
                        int heads, int points);

// Mean binary cross-entropy on logits against targets in [0, 1].
Tensor bce_with_logits(const Tensor& logits, const std::vector<double>& targets);

}  // namespace omniseg::tensor
