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

#pragma once

#include <cstdint>
#include <vector>

#include "tensorkit/tensor.hpp"

namespace omniseg::tensor {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.05;
};

// First/second moment buffers for one parameter tensor.
struct AdamWSlot {
  std::vector<double> m;
  std::vector<double> v;
};

struct AdamWState {
  std::int64_t step = 0;
  std::vector<AdamWSlot> slots;  // parallel to the parameter list
};

// One decoupled-weight-decay Adam update:
//   p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + wd * p)
// `grads[i]` may be empty (treated as zero). A non-finite gradient rejects
// the whole step before any parameter is modified.
void adamw_step(std::vector<Tensor>& params,
                const std::vector<std::vector<double>>& grads,
                AdamWState& state, double lr, const AdamWConfig& cfg);

// lr0 * (1 - step/total)^power. Steps past `total` clamp to 0.
double poly_decay_lr(std::int64_t step, std::int64_t total, double lr0,
                     double power);

}  // namespace omniseg::tensor
