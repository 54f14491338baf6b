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

// In-memory view of a generated dataset that turns manifest records into
// model inputs and per-source targets.

#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "omnimodel/model.hpp"
#include "synthref/dataset.hpp"

namespace omniseg::model {

// Which prompts of a record to feed.
enum class SourceFilter { kAll, kTextOnly, kVisualOnly };

struct PreparedSample {
  std::string id;
  Tensor image;  // [1, 3, S, S]
  PromptSet prompts;
  std::vector<synth::Source> sources;      // decoding order
  std::vector<mask::BinaryMask> targets;  // parallel to sources
  bool exists = false;
  synth::CaseLabel case_label = synth::CaseLabel::kNoTarget;
};

// Training-time augmentation. Flips are horizontal and drawn independently
// for the target and the reference; a target flip also swaps "leftmost" and
// "rightmost" in the text. Reference resampling replaces the reference with
// a random same-category instance from the reference pool.
struct Augmentation {
  bool flip = true;
  bool resample_reference = true;
};

class SampleStore {
 public:
  // Loads every scene image under `root`. Manifests load on first use.
  explicit SampleStore(const std::filesystem::path& root);

  const std::filesystem::path& root() const { return root_; }
  const std::vector<synth::ManifestRecord>& records(const std::string& split);
  const synth::RgbImage& image(const std::string& scene_id) const;
  bool has_scene(const std::string& scene_id) const { return images_.count(scene_id) > 0; }

  // Errors with kUsage when the filter leaves no prompt. `kind` re-derives
  // the visual prompt from the stored reference instance.
  PreparedSample prepare(const synth::ManifestRecord& record, SourceFilter filter,
                         std::optional<synth::PromptKind> kind = std::nullopt) const;

  // Reference pool: every object of the scenes that records of `split` use
  // as references, grouped by category.
  void set_reference_pool(const std::string& split);
  std::size_t reference_pool_size() const;
  PreparedSample prepare_augmented(const synth::ManifestRecord& record, SourceFilter filter,
                                   std::optional<synth::PromptKind> kind,
                                   const Augmentation& augmentation,
                                   std::mt19937_64& rng) const;

 private:
  std::filesystem::path root_;
  std::map<std::string, synth::RgbImage> images_;
  std::map<std::string, std::vector<synth::ManifestRecord>> manifests_;
  std::map<std::string, std::vector<synth::SceneObject>> objects_;
  struct PoolEntry {
    std::string scene;
    mask::BinaryMask instance;
  };
  std::map<int, std::vector<PoolEntry>> pool_;  // by category index
};

}  // namespace omniseg::model
