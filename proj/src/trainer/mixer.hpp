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
#include <random>
#include <vector>

#include "synthref/sample.hpp"

namespace omniseg::trainer {

// Interleaves text and visual batches in fixed-size cycles. Every cycle
// holds exactly text_quota text and visual_quota visual batches, shuffled
// by the seed.
class BatchMixer {
 public:
  BatchMixer(int text_quota, int visual_quota, std::uint64_t seed);

  synth::Source next();
  int cycle_length() const { return text_quota_ + visual_quota_; }

 private:
  int text_quota_;
  int visual_quota_;
  std::mt19937_64 rng_;
  std::vector<synth::Source> cycle_;
  std::size_t pos_ = 0;
};

// Endless stream over item indices [0, n): a fresh seeded permutation per
// pass.
class IndexStream {
 public:
  IndexStream(std::size_t n, std::uint64_t seed);

  std::size_t next();

 private:
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
  std::mt19937_64 rng_;
};

}  // namespace omniseg::trainer
