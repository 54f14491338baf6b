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

// Finite-difference gradient checking against the reverse-mode engine.

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tensorkit/tensor.hpp"

namespace omniseg::tensor {

struct GradCheckResult {
  std::string name;
  std::size_t entries_checked = 0;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // Relative error denominator never drops below this, so entries whose
  // true gradient is ~0 are judged on an absolute scale.
  double floor = 1e-6;
  // 0 checks every entry; otherwise a seeded subset per input.
  std::size_t max_entries_per_input = 0;
  std::uint64_t seed = 0;
};

// Compares backward() of `loss_fn` with central differences with respect to
// every tensor in `inputs`. `loss_fn` must rebuild the graph on each call.
GradCheckResult check_gradients(const std::string& name,
                                const std::function<Tensor()>& loss_fn,
                                const std::vector<Tensor>& inputs,
                                const GradCheckOptions& options = {});

// |a - b| / max(|a|, |b|, floor)
double relative_error(double analytic, double numeric, double floor);

}  // namespace omniseg::tensor
