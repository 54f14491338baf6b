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

// Parameterised building blocks shared by the encoders, the prompt
// generator and the mask decoder.

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "omnimodel/params.hpp"
#include "tensorkit/ops.hpp"

namespace omniseg::model {

struct Linear {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out] or undefined

  Tensor operator()(const Tensor& x) const { return tensor::linear(x, weight, bias); }
};

struct LayerNorm {
  Tensor gamma;
  Tensor beta;

  Tensor operator()(const Tensor& x) const {
    return tensor::layer_norm(x, gamma, beta);
  }
};

struct Conv {
  Tensor weight;  // [out, in, k, k]
  Tensor bias;    // [out]
  int stride = 1;
  int pad = 0;

  Tensor operator()(const Tensor& x) const {
    return tensor::conv2d(x, weight, bias, stride, pad);
  }
};

// Multi-head attention with input and output projections.
struct Attention {
  Linear q, k, v, o;
  int heads = 1;

  Tensor operator()(const Tensor& query, const Tensor& key, const Tensor& value,
                    const std::vector<std::uint8_t>& key_valid,
                    std::vector<double>* weights_out = nullptr) const;
};

struct FeedForward {
  Linear up, down;

  Tensor operator()(const Tensor& x) const { return down(tensor::gelu(up(x))); }
};

// Multi-scale deformable cross-attention. Each query predicts, per head,
// scale and point, an offset (in pixels of that scale) from its reference
// point and an attention weight; weights are softmax-normalised over
// scales x points.
struct DeformableAttention {
  Linear offsets, weights, value, output;
  int heads = 1;
  int levels = 1;
  int points = 1;

  // query[n, d], reference[n, 2] normalised (x, y), memory[T, d] laid out
  // level by level as described by `shapes`.
  Tensor operator()(const Tensor& query, const Tensor& reference,
                    const Tensor& memory,
                    const std::vector<tensor::LevelShape>& shapes) const;
};

class LayerFactory {
 public:
  LayerFactory(ParamStore& store, std::mt19937_64& rng) : store_(store), rng_(rng) {}

  Linear linear(const std::string& name, int in, int out, bool with_bias = true);
  Linear zero_linear(const std::string& name, int in, int out);
  LayerNorm layer_norm(const std::string& name, int dim);
  Conv conv(const std::string& name, int in, int out, int kernel, int stride, int pad);
  Attention attention(const std::string& name, int dim, int heads);
  FeedForward feed_forward(const std::string& name, int dim, int hidden);
  DeformableAttention deformable(const std::string& name, int dim, int heads,
                                 int levels, int points);
  Tensor tensor(const std::string& name, Shape shape, std::vector<double> values);

  std::mt19937_64& rng() { return rng_; }

 private:
  ParamStore& store_;
  std::mt19937_64& rng_;
};

// Fixed 2-D sinusoidal encoding of an h x w grid of cell centres: the first
// dim/2 channels encode y, the rest x. Returns [h*w, dim].
Tensor sine_positions(int h, int w, int dim);

// [1, C, H, W] or [C, H, W] -> [H*W, C] and back.
Tensor map_to_tokens(const Tensor& map);
Tensor tokens_to_map(const Tensor& tokens, int h, int w);

}  // namespace omniseg::model
