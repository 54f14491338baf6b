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

#include <filesystem>
#include <string>

#include "synthref/dataset.hpp"

namespace omniseg::testing {

// Small generated dataset, built once per test binary under the temp dir.
inline const std::filesystem::path& small_dataset(const std::string& tag) {
  static const std::filesystem::path root = [&] {
    const auto p = std::filesystem::temp_directory_path() / ("omniseg_fixture_" + tag);
    std::filesystem::remove_all(p);
    synth::DatasetConfig c;
    c.seed = 11;
    c.train_samples = 60;
    c.test_scenes = 10;
    c.train_reference_scenes = 40;
    c.test_reference_scenes = 30;
    synth::build_dataset(c, p);
    return p;
  }();
  return root;
}

}  // namespace omniseg::testing
