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

#include "omnimodel/layers.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "common/error.hpp"

namespace omniseg::model {

using namespace omniseg::tensor;

Tensor Attention::operator()(const Tensor& query, const Tensor& key,
                             const Tensor& value,
                             const std::vector<std::uint8_t>& key_valid,
                             std::vector<double>* weights_out) const {
  return o(attention_core(q(query), k(key), v(value), heads, key_valid, weights_out));
}

Tensor DeformableAttention::operator()(const Tensor& query, const Tensor& reference,
                                       const Tensor& memory,
                                       const std::vector<LevelShape>& shapes) const {
  require(static_cast<int>(shapes.size()) == levels, ErrorKind::kDimension,
          "deformable attention level count mismatch");
  const int n = query.dim(0);
  const int cols = heads * levels * points * 2;
  const Tensor off = offsets(query);
  for (double v : off.data())
    require(std::isfinite(v), ErrorKind::kNumeric, "non-finite sampling offset");

  // Broadcast (x, y) of each reference point to every sampling column, and
  // convert pixel offsets to normalised units of their level.
  std::vector<double> spread(2 * static_cast<std::size_t>(cols), 0.0);
  std::vector<double> per_col(cols);
  for (int c = 0; c < cols; ++c) {
    const int axis = c % 2;
    const int level = (c / 2 / points) % levels;
    spread[static_cast<std::size_t>(axis) * cols + c] = 1.0;
    per_col[c] = 1.0 / (axis == 0 ? shapes[level].width : shapes[level].height);
  }
  std::vector<double> unit(static_cast<std::size_t>(n) * cols);
  for (int r = 0; r < n; ++r)
    std::copy(per_col.begin(), per_col.end(), unit.begin() + static_cast<std::ptrdiff_t>(r) * cols);
  const Tensor locations =
      add(matmul(reference, Tensor::from({2, cols}, std::move(spread))),
          mul(off, Tensor::from({n, cols}, std::move(unit))));
  const Tensor attn = softmax_groups(weights(query), levels * points);
  return output(ms_deform_sample(value(memory), shapes, locations, attn, heads, points));
}

Tensor LayerFactory::tensor(const std::string& name, Shape shape,
                            std::vector<double> values) {
  return store_.add(name, std::move(shape), std::move(values));
}

Linear LayerFactory::linear(const std::string& name, int in, int out, bool with_bias) {
  Linear l;
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  l.weight = tensor(name + ".weight", {in, out},
                    uniform_values(static_cast<std::size_t>(in) * out, bound, rng_));
  if (with_bias)
    l.bias = tensor(name + ".bias", {out}, std::vector<double>(out, 0.0));
  return l;
}

Linear LayerFactory::zero_linear(const std::string& name, int in, int out) {
  Linear l;
  l.weight = tensor(name + ".weight", {in, out},
                    std::vector<double>(static_cast<std::size_t>(in) * out, 0.0));
  l.bias = tensor(name + ".bias", {out}, std::vector<double>(out, 0.0));
  return l;
}

LayerNorm LayerFactory::layer_norm(const std::string& name, int dim) {
  return {tensor(name + ".gamma", {dim}, std::vector<double>(dim, 1.0)),
          tensor(name + ".beta", {dim}, std::vector<double>(dim, 0.0))};
}

Conv LayerFactory::conv(const std::string& name, int in, int out, int kernel,
                        int stride, int pad) {
  Conv c;
  const double bound = std::sqrt(6.0 / static_cast<double>(in * kernel * kernel));
  c.weight = tensor(name + ".weight", {out, in, kernel, kernel},
                    uniform_values(static_cast<std::size_t>(out) * in * kernel * kernel,
                                   bound, rng_));
  c.bias = tensor(name + ".bias", {out}, std::vector<double>(out, 0.0));
  c.stride = stride;
  c.pad = pad;
  return c;
}

Attention LayerFactory::attention(const std::string& name, int dim, int heads) {
  Attention a;
  a.q = linear(name + ".q", dim, dim);
  a.k = linear(name + ".k", dim, dim);
  a.v = linear(name + ".v", dim, dim);
  a.o = linear(name + ".o", dim, dim);
  a.heads = heads;
  return a;
}

FeedForward LayerFactory::feed_forward(const std::string& name, int dim, int hidden) {
  return {linear(name + ".up", dim, hidden), linear(name + ".down", hidden, dim)};
}

DeformableAttention LayerFactory::deformable(const std::string& name, int dim,
                                             int heads, int levels, int points) {
  DeformableAttention d;
  d.heads = heads;
  d.levels = levels;
  d.points = points;
  const int cols = heads * levels * points * 2;
  // Offsets start at zero weight with a bias fanning each head out along its
  // own direction, point p at distance p + 1.
  std::vector<double> bias(cols);
  for (int h = 0; h < heads; ++h) {
    const double ang = 2.0 * std::numbers::pi * h / heads;
    const double cx = std::cos(ang), cy = std::sin(ang);
    const double norm = std::max(std::abs(cx), std::abs(cy));
    for (int l = 0; l < levels; ++l)
      for (int p = 0; p < points; ++p) {
        const int at = ((h * levels + l) * points + p) * 2;
        bias[at] = cx / norm * (p + 1);
        bias[at + 1] = cy / norm * (p + 1);
      }
  }
  d.offsets.weight = tensor(name + ".offsets.weight", {dim, cols},
                            std::vector<double>(static_cast<std::size_t>(dim) * cols, 0.0));
  d.offsets.bias = tensor(name + ".offsets.bias", {cols}, std::move(bias));
  d.weights = zero_linear(name + ".weights", dim, heads * levels * points);
  d.value = linear(name + ".value", dim, dim);
  d.output = linear(name + ".output", dim, dim);
  return d;
}

Tensor sine_positions(int h, int w, int dim) {
  require(dim % 4 == 0, ErrorKind::kConfig, "position dim must be divisible by 4");
  const int half = dim / 2;
  const int bands = half / 2;  // sin/cos pairs per axis, 1 to 8 cycles per frame
  std::vector<double> v(static_cast<std::size_t>(h) * w * dim);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      const double coords[2] = {(r + 0.5) / h, (c + 0.5) / w};
      double* row = v.data() + (static_cast<std::size_t>(r) * w + c) * dim;
      for (int axis = 0; axis < 2; ++axis)
        for (int i = 0; i < half; ++i) {
          const double freq =
              bands > 1 ? std::pow(8.0, (i / 2) / (bands - 1.0)) : 1.0;
          const double a = coords[axis] * 2.0 * std::numbers::pi * freq;
          row[axis * half + i] = (i % 2 == 0) ? std::sin(a) : std::cos(a);
        }
    }
  return Tensor::from({h * w, dim}, std::move(v));
}

Tensor map_to_tokens(const Tensor& map) {
  const int r = map.rank();
  require(r == 3 || (r == 4 && map.dim(0) == 1), ErrorKind::kDimension,
          "expected a [C,H,W] or [1,C,H,W] map");
  const int c = map.dim(r - 3), h = map.dim(r - 2), w = map.dim(r - 1);
  return transpose(reshape(map, {c, h * w}));
}

Tensor tokens_to_map(const Tensor& tokens, int h, int w) {
  require(tokens.rank() == 2 && tokens.dim(0) == h * w, ErrorKind::kDimension,
          "token count does not match the map extent");
  return reshape(transpose(tokens), {tokens.dim(1), h, w});
}

}  // namespace omniseg::model
