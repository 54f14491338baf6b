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

#include "tensorkit/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace omniseg::tensor {

double relative_error(double analytic, double numeric, double floor) {
  const double denom =
      std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckResult check_gradients(const std::string& name,
                                const std::function<Tensor()>& loss_fn,
                                const std::vector<Tensor>& inputs,
                                const GradCheckOptions& options) {
  GradCheckResult result;
  result.name = name;
  result.tolerance = options.tolerance;

  for (const auto& t : inputs) {
    Tensor(t).zero_grad();
  }
  backward(loss_fn());
  std::vector<std::vector<double>> analytic;
  analytic.reserve(inputs.size());
  for (const auto& t : inputs) analytic.push_back(t.grad());

  std::mt19937_64 rng(options.seed);
  NoGradGuard no_grad;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    Tensor t = inputs[i];
    std::vector<std::size_t> idx(t.numel());
    std::iota(idx.begin(), idx.end(), 0);
    if (options.max_entries_per_input > 0 &&
        idx.size() > options.max_entries_per_input) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(options.max_entries_per_input);
      std::sort(idx.begin(), idx.end());
    }
    auto values = t.mutable_data();
    for (std::size_t j : idx) {
      const double saved = values[j];
      values[j] = saved + options.step;
      const double up = loss_fn().item();
      values[j] = saved - options.step;
      const double down = loss_fn().item();
      values[j] = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      result.max_rel_error =
          std::max(result.max_rel_error,
                   relative_error(analytic[i][j], numeric, options.floor));
      ++result.entries_checked;
    }
  }
  for (const auto& t : inputs) Tensor(t).zero_grad();
  result.passed = result.max_rel_error <= options.tolerance &&
                  std::isfinite(result.max_rel_error);
  return result;
}

}  // namespace omniseg::tensor
