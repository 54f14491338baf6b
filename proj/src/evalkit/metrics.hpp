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

// Referring segmentation metrics: per-sample IoU with no-target
// conventions, cIoU, gIoU, N_acc and Pr@X, plus split-level evaluation.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "maskgeo/mask.hpp"
#include "omnimodel/model.hpp"
#include "omnimodel/sample_store.hpp"

namespace omniseg::eval {

struct EvalRecord {
  std::string id;
  synth::Source source = synth::Source::kText;
  synth::CaseLabel case_label = synth::CaseLabel::kNoTarget;
  bool gt_empty = false;
  bool pred_no_target = false;
  std::int64_t intersection = 0;
  std::int64_t union_ = 0;
  double iou = 0.0;
};

// Scores one prediction. A no-target prediction empties the mask first.
// No-target gt: 1 for a true negative, 0 otherwise. Target gt flagged as
// no-target scores 0.
EvalRecord score_sample(const mask::BinaryMask& pred, bool pred_no_target,
                        const mask::BinaryMask& gt, bool exists);

double giou(const std::vector<EvalRecord>& records);
// Sum of intersections over sum of unions; 1 when every union is empty.
double ciou(const std::vector<EvalRecord>& records);
// Fraction of no-target records flagged as such; empty when there are none.
std::optional<double> n_acc(const std::vector<EvalRecord>& records);
// Share of target records whose IoU strictly exceeds `threshold`.
double pr_at(const std::vector<EvalRecord>& records, double threshold);

inline constexpr double kPrThresholds[] = {0.7, 0.8, 0.9};

struct MetricsReport {
  std::string split;
  std::size_t records = 0;
  double ciou = 0.0;
  double giou = 0.0;
  std::optional<double> n_acc;
  std::map<std::string, double> pr;  // "0.7" -> value
  std::map<std::string, int> case_counts;
};

MetricsReport summarize(const std::string& split, const std::vector<EvalRecord>& records);

struct SplitReport {
  MetricsReport pooled;
  std::map<std::string, MetricsReport> per_source;  // "text", "visual"
};

SplitReport build_report(const std::string& split, const std::vector<EvalRecord>& records);
nlohmann::json report_to_json(const SplitReport& r);

nlohmann::json record_to_json(const EvalRecord& r);
EvalRecord record_from_json(const nlohmann::json& j);
void write_records(const std::filesystem::path& path, const std::vector<EvalRecord>& records);
std::vector<EvalRecord> read_records(const std::filesystem::path& path);

struct EvalOptions {
  // Re-derives every visual prompt with this kind.
  std::optional<synth::PromptKind> prompt_kind;
  // Evaluates only the first `limit` samples when positive.
  int limit = 0;
};

struct EvalResult {
  std::vector<EvalRecord> records;
  SplitReport report;
};

// Runs the model over a split. Omni samples contribute one record per
// source; every record is gated by the sample-level existence decision.
EvalResult evaluate(const model::OmniSegNet& net, model::SampleStore& store,
                    const std::string& split, const EvalOptions& options = {});

}  // namespace omniseg::eval
