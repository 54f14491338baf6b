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

#include "tensorkit/optim.hpp"

#include <cmath>
#include <iostream>

#include "common/error.hpp"

namespace omniseg::tensor {

void adamw_step(std::vector<Tensor>& params,
                const std::vector<std::vector<double>>& grads,
                AdamWState& state, double lr, const AdamWConfig& cfg) {
  require(grads.size() == params.size(), ErrorKind::kDimension,
          "adamw_step: gradient list does not match parameter list");
  if (state.slots.empty()) state.slots.resize(params.size());
  require(state.slots.size() == params.size(), ErrorKind::kDimension,
          "adamw_step: optimizer state does not match parameter list");
  for (std::size_t i = 0; i < params.size(); ++i) {
    require(grads[i].empty() || grads[i].size() == params[i].numel(),
            ErrorKind::kDimension, "adamw_step: gradient shape mismatch");
    auto& slot = state.slots[i];
    if (slot.m.empty()) {
      slot.m.assign(params[i].numel(), 0.0);
      slot.v.assign(params[i].numel(), 0.0);
    }
    require(slot.m.size() == params[i].numel(), ErrorKind::kDimension,
            "adamw_step: moment buffer shape mismatch");
    for (double g : grads[i]) {
      require(std::isfinite(g), ErrorKind::kNumeric,
              "adamw_step: non-finite gradient, step rejected");
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].mutable_data();
    auto& slot = state.slots[i];
    const bool has_grad = !grads[i].empty();
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double g = has_grad ? grads[i][j] : 0.0;
      slot.m[j] = cfg.beta1 * slot.m[j] + (1.0 - cfg.beta1) * g;
      slot.v[j] = cfg.beta2 * slot.v[j] + (1.0 - cfg.beta2) * g * g;
      const double m_hat = slot.m[j] / bc1;
      const double v_hat = slot.v[j] / bc2;
      p[j] -= lr * (m_hat / (std::sqrt(v_hat) + cfg.eps) +
                    cfg.weight_decay * p[j]);
    }
  }
}

double poly_decay_lr(std::int64_t step, std::int64_t total, double lr0,
                     double power) {
  require(total > 0, ErrorKind::kInvalidArgument,
          "poly_decay_lr: total steps must be positive");
  require(step >= 0, ErrorKind::kInvalidArgument,
          "poly_decay_lr: negative step");
  if (step > total) {
    std::cerr << "warning: poly_decay_lr step " << step << " > total "
              << total << ", clamping to 0\n";
    return 0.0;
  }
  const double frac =
      1.0 - static_cast<double>(step) / static_cast<double>(total);
  return lr0 * std::pow(frac, power);
}

}  // namespace omniseg::tensor
