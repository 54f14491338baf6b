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

#include "trainer/mixer.hpp"

#include <algorithm>
#include <numeric>

#include "common/error.hpp"

namespace omniseg::trainer {

BatchMixer::BatchMixer(int text_quota, int visual_quota, std::uint64_t seed)
    : text_quota_(text_quota), visual_quota_(visual_quota), rng_(seed) {
  require(text_quota >= 0 && visual_quota >= 0 && text_quota + visual_quota > 0,
          ErrorKind::kConfig, "mixer quotas must be nonnegative and not both zero");
}

synth::Source BatchMixer::next() {
  if (pos_ == cycle_.size()) {
    cycle_.assign(text_quota_, synth::Source::kText);
    cycle_.insert(cycle_.end(), visual_quota_, synth::Source::kVisual);
    std::shuffle(cycle_.begin(), cycle_.end(), rng_);
    pos_ = 0;
  }
  return cycle_[pos_++];
}

IndexStream::IndexStream(std::size_t n, std::uint64_t seed) : order_(n), rng_(seed) {
  require(n > 0, ErrorKind::kUsage, "cannot stream an empty item set");
  pos_ = n;
}

std::size_t IndexStream::next() {
  if (pos_ == order_.size()) {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::shuffle(order_.begin(), order_.end(), rng_);
    pos_ = 0;
  }
  return order_[pos_++];
}

}  // namespace omniseg::trainer
