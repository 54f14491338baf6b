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

// Three-stage training: text alignment, visual tuning with a frozen text
// encoder, then joint training on mixed batches.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "objective/loss.hpp"
#include "omnimodel/config.hpp"
#include "omnimodel/model.hpp"
#include "omnimodel/sample_store.hpp"

namespace omniseg::trainer {

enum class StageKind { kVlAlign, kVisualTune, kJoint };

std::string stage_name(StageKind k);

struct StageConfig {
  StageKind kind = StageKind::kVlAlign;
  int steps = 0;
  double lr0 = 1e-3;
  std::vector<std::string> frozen_prefixes;
};

struct TrainConfig {
  std::uint64_t seed = 0;
  std::string preset = "desk";
  // Applied on top of the preset, e.g. {"d_model": 16}.
  nlohmann::json model_overrides = nlohmann::json::object();
  int batch_size = 8;
  double lr = 1e-3;
  double power = 0.9;
  double weight_decay = 0.05;
  std::array<int, 3> stage_steps = {600, 600, 800};
  objective::LossWeights weights;
  int text_quota = 7;
  int visual_quota = 2;
  std::string frozen_prefix = "text_encoder.";
  // Horizontal flips and same-category reference resampling on train samples.
  bool augment = false;

  void validate() const;
  model::ModelConfig model_config() const;
  std::vector<StageConfig> stages() const;
};

// key=value lines; '#' starts a comment. Keys: seed, preset, batch_size, lr,
// power, weight_decay, stage1_steps, stage2_steps, stage3_steps,
// lambda_mask, lambda_region, lambda_nt, text_quota, visual_quota,
// frozen_prefix, augment (0/1), and model.<field> for model overrides.
// Unknown keys and malformed values raise kConfig.
TrainConfig parse_train_config(const std::string& text);
TrainConfig load_train_config(const std::filesystem::path& path);
nlohmann::json train_config_to_json(const TrainConfig& c);

struct StepLog {
  int stage = 0;  // 1-based
  StageKind kind = StageKind::kVlAlign;
  int step = 0;
  std::int64_t global_step = 0;
  double lr = 0.0;
  objective::LossBreakdown loss;
};

nlohmann::json step_log_to_json(const StepLog& s);

struct StageResult {
  int stage = 0;
  StageKind kind = StageKind::kVlAlign;
  int steps = 0;
  double first_loss = 0.0;
  double final_loss = 0.0;  // mean l_total over the last min(20, steps) steps
  std::uint64_t frozen_hash_before = 0;
  std::uint64_t frozen_hash_after = 0;
  std::filesystem::path checkpoint;
};

struct TrainSummary {
  std::vector<StageResult> stages;
  double seconds = 0.0;
};

nlohmann::json stage_result_to_json(const StageResult& r);
nlohmann::json train_summary_to_json(const TrainSummary& s);

class Trainer {
 public:
  using LogSink = std::function<void(const StepLog&)>;

  Trainer(TrainConfig config, model::SampleStore& store);

  const TrainConfig& config() const { return config_; }

  // Runs one stage in place. `stage` is 1-based and seeds the data order.
  // A non-finite loss or gradient restores the parameters of the last step
  // whose loss was finite, writes them to `last_good` (when non-empty) and
  // raises kNumeric.
  StageResult run_stage(model::OmniSegNet& net, int stage, const StageConfig& sc,
                        const LogSink& sink = {},
                        const std::filesystem::path& last_good = {});

  // Runs stages first_stage..3, writing stage<i>.ckpt, last_good.ckpt on
  // failure, and train_log.jsonl (appended) under `out`.
  TrainSummary run(model::OmniSegNet& net, const std::filesystem::path& out,
                   int first_stage = 1);

 private:
  TrainConfig config_;
  model::SampleStore& store_;
  std::vector<std::size_t> text_items_;
  std::vector<std::size_t> visual_items_;
};

}  // namespace omniseg::trainer
