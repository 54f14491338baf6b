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

// Finite-difference gradient suite: every differentiable tensor op plus the
// full network with its training loss at the reduced gradcheck size.

#pragma once

#include <cstdint>
#include <vector>

#include "tensorkit/gradcheck.hpp"

namespace omniseg::model {

struct GradientSuiteReport {
  std::vector<tensor::GradCheckResult> results;
  double seconds = 0.0;

  bool passed() const;
};

GradientSuiteReport run_gradient_suite(std::uint64_t seed = 0);

}  // namespace omniseg::model
