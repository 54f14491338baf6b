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

// Dataset assembly: reference pools, the four splits, on-disk layout,
// manifest records and the invariant validator.
//
// Layout under the output directory:
//   images/<scene>.png     8-bit RGB
//   scenes.jsonl           one line per scene (seed, objects, RLE masks)
//   <split>.jsonl          one line per sample
//   vocab.json, stats.json

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "maskgeo/mask.hpp"
#include "synthref/sample.hpp"
#include "synthref/scene.hpp"

namespace omniseg::synth {

inline const std::array<std::string, 4> kSplitNames = {
    "omni-train", "text-test", "visual-test", "omni-test"};
inline constexpr const char* kTrainSplit = "omni-train";

struct DatasetConfig {
  std::uint64_t seed = 0;
  SceneConfig scene;
  int train_samples = 2000;
  // Remaining train samples are omni (text + visual).
  double text_fraction = 0.4;
  double visual_fraction = 0.4;
  // Each test split holds one single-, one multi- and one no-target sample
  // per test scene.
  int test_scenes = 100;
  int train_reference_scenes = 400;
  int test_reference_scenes = 150;
  int max_attempts = 64;
};

nlohmann::json config_to_json(const DatasetConfig& c);
DatasetConfig config_from_json(const nlohmann::json& j);

struct VisualRecord {
  std::string ref_scene;
  std::string ref_image;
  int ref_object = -1;
  std::string category;
  PromptKind kind = PromptKind::kMask;
  mask::ScribbleStyle style = mask::ScribbleStyle::kLines;
  std::uint64_t scribble_seed = 0;
  mask::RleMask prompt;
  mask::RleMask instance;
};

struct GtRecord {
  Source source = Source::kText;
  mask::RleMask mask;
};

struct ManifestRecord {
  std::string id;
  std::string split;
  std::string scene;
  std::string target_image;
  std::optional<std::string> text;
  std::vector<int> text_tokens;
  std::optional<VisualRecord> visual;
  std::vector<GtRecord> gt;
  bool exists = false;
  CaseLabel case_label = CaseLabel::kNoTarget;
};

nlohmann::json record_to_json(const ManifestRecord& r);
ManifestRecord record_from_json(const nlohmann::json& j);

struct StoredScene {
  std::string id;
  std::string image;  // relative to the dataset root
  Scene scene;        // rgb left empty when loaded from disk
};

struct SplitStats {
  int samples = 0;
  std::map<std::string, int> cases;
  std::map<std::string, int> modalities;  // text / visual / omni
};

struct DatasetSummary {
  std::map<std::string, SplitStats> splits;
  int scenes = 0;
  std::vector<std::filesystem::path> files;
};

// Pure function of the config. Files already present under `out` are
// overwritten; on failure every file this call created is removed again.
DatasetSummary build_dataset(const DatasetConfig& config,
                             const std::filesystem::path& out);

std::vector<ManifestRecord> load_manifest(const std::filesystem::path& root,
                                          const std::string& split);
std::vector<StoredScene> load_scenes(const std::filesystem::path& root);
DatasetConfig load_dataset_config(const std::filesystem::path& root);

struct ValidationReport {
  std::size_t records = 0;
  std::size_t scenes = 0;
  std::vector<std::string> violations;

  bool ok() const { return violations.empty(); }
};

ValidationReport validate_dataset(const std::filesystem::path& root);

}  // namespace omniseg::synth
