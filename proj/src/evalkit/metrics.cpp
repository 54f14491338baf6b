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

#include "evalkit/metrics.hpp"

#include <fstream>
#include <sstream>

#include "common/error.hpp"
#include "tensorkit/tensor.hpp"

namespace omniseg::eval {

EvalRecord score_sample(const mask::BinaryMask& pred, bool pred_no_target,
                        const mask::BinaryMask& gt, bool exists) {
  require(pred.height() == gt.height() && pred.width() == gt.width(), ErrorKind::kDimension,
          "prediction and gt sizes differ");
  EvalRecord r;
  r.pred_no_target = pred_no_target;
  std::int64_t gt_area = 0, pred_area = 0, inter = 0;
  const auto& pb = pred.bits();
  const auto& gb = gt.bits();
  for (std::size_t i = 0; i < gb.size(); ++i) {
    const bool p = !pred_no_target && pb[i] != 0;
    const bool g = gb[i] != 0;
    gt_area += g;
    pred_area += p;
    inter += p && g;
  }
  r.gt_empty = !exists;
  r.intersection = inter;
  r.union_ = gt_area + pred_area - inter;
  if (!exists) {
    r.iou = pred_no_target ? 1.0 : 0.0;
  } else if (pred_no_target) {
    r.iou = 0.0;
  } else {
    r.iou = r.union_ > 0 ? static_cast<double>(inter) / static_cast<double>(r.union_) : 0.0;
  }
  return r;
}

double giou(const std::vector<EvalRecord>& records) {
  require(!records.empty(), ErrorKind::kUsage, "gIoU of an empty record set is undefined");
  double s = 0.0;
  for (const auto& r : records) s += r.iou;
  return s / static_cast<double>(records.size());
}

double ciou(const std::vector<EvalRecord>& records) {
  require(!records.empty(), ErrorKind::kUsage, "cIoU of an empty record set is undefined");
  std::int64_t inter = 0, uni = 0;
  for (const auto& r : records) {
    inter += r.intersection;
    uni += r.union_;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

std::optional<double> n_acc(const std::vector<EvalRecord>& records) {
  int total = 0, hit = 0;
  for (const auto& r : records) {
    if (!r.gt_empty) continue;
    ++total;
    hit += r.pred_no_target;
  }
  if (total == 0) return std::nullopt;
  return static_cast<double>(hit) / total;
}

double pr_at(const std::vector<EvalRecord>& records, double threshold) {
  int total = 0, hit = 0;
  for (const auto& r : records) {
    if (r.gt_empty) continue;
    ++total;
    hit += r.iou > threshold;
  }
  require(total > 0, ErrorKind::kUsage, "Pr@X needs at least one target record");
  return static_cast<double>(hit) / total;
}

namespace {

std::string threshold_key(double t) {
  std::ostringstream ss;
  ss << t;
  return ss.str();
}

}  // namespace

MetricsReport summarize(const std::string& split, const std::vector<EvalRecord>& records) {
  MetricsReport m;
  m.split = split;
  m.records = records.size();
  m.ciou = ciou(records);
  m.giou = giou(records);
  m.n_acc = n_acc(records);
  bool any_target = false;
  for (const auto& r : records) any_target |= !r.gt_empty;
  for (double t : kPrThresholds) m.pr[threshold_key(t)] = any_target ? pr_at(records, t) : 0.0;
  for (const auto& r : records) ++m.case_counts[synth::case_name(r.case_label)];
  return m;
}

SplitReport build_report(const std::string& split, const std::vector<EvalRecord>& records) {
  SplitReport rep;
  rep.pooled = summarize(split, records);
  std::map<std::string, std::vector<EvalRecord>> by_source;
  for (const auto& r : records) by_source[synth::source_name(r.source)].push_back(r);
  for (const auto& [name, recs] : by_source) rep.per_source[name] = summarize(split, recs);
  return rep;
}

namespace {

nlohmann::json metrics_json(const MetricsReport& m) {
  nlohmann::json j = {{"records", m.records},
                      {"ciou", m.ciou},
                      {"giou", m.giou},
                      {"n_acc", m.n_acc ? nlohmann::json(*m.n_acc) : nlohmann::json(nullptr)},
                      {"pr", m.pr},
                      {"per_case_counts", m.case_counts}};
  return j;
}

}  // namespace

nlohmann::json report_to_json(const SplitReport& r) {
  nlohmann::json j = metrics_json(r.pooled);
  j["split"] = r.pooled.split;
  j["per_source"] = nlohmann::json::object();
  for (const auto& [name, m] : r.per_source) j["per_source"][name] = metrics_json(m);
  return j;
}

nlohmann::json record_to_json(const EvalRecord& r) {
  return {{"id", r.id},
          {"source", synth::source_name(r.source)},
          {"case", synth::case_name(r.case_label)},
          {"gt_empty", r.gt_empty},
          {"pred_no_target", r.pred_no_target},
          {"intersection", r.intersection},
          {"union", r.union_},
          {"iou", r.iou}};
}

EvalRecord record_from_json(const nlohmann::json& j) {
  try {
    EvalRecord r;
    r.id = j.at("id").get<std::string>();
    r.source = synth::parse_source(j.at("source").get<std::string>());
    r.case_label = synth::parse_case(j.at("case").get<std::string>());
    r.gt_empty = j.at("gt_empty").get<bool>();
    r.pred_no_target = j.at("pred_no_target").get<bool>();
    r.intersection = j.at("intersection").get<std::int64_t>();
    r.union_ = j.at("union").get<std::int64_t>();
    r.iou = j.at("iou").get<double>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat, std::string("bad evaluation record: ") + e.what());
  }
}

void write_records(const std::filesystem::path& path, const std::vector<EvalRecord>& records) {
  std::ofstream f(path, std::ios::trunc);
  require(f.good(), ErrorKind::kIo, "cannot write " + path.string());
  for (const auto& r : records) f << record_to_json(r).dump() << '\n';
  require(f.good(), ErrorKind::kIo, "write failed: " + path.string());
}

std::vector<EvalRecord> read_records(const std::filesystem::path& path) {
  std::ifstream f(path);
  require(f.good(), ErrorKind::kIo, "cannot read " + path.string());
  std::vector<EvalRecord> out;
  std::string line;
  while (std::getline(f, line))
    if (!line.empty()) out.push_back(record_from_json(nlohmann::json::parse(line)));
  return out;
}

EvalResult evaluate(const model::OmniSegNet& net, model::SampleStore& store,
                    const std::string& split, const EvalOptions& options) {
  const auto& all = store.records(split);
  std::size_t n = all.size();
  if (options.limit > 0) n = std::min<std::size_t>(n, static_cast<std::size_t>(options.limit));
  std::string missing;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& rec = all[i];
    bool ok = store.has_scene(rec.scene);
    if (rec.visual) ok = ok && store.has_scene(rec.visual->ref_scene);
    if (!ok) missing += (missing.empty() ? "" : ", ") + rec.id;
  }
  require(missing.empty(), ErrorKind::kNotFound, "missing images for: " + missing);

  tensor::NoGradGuard no_grad;
  EvalResult res;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& rec = all[i];
    const auto s = store.prepare(rec, model::SourceFilter::kAll, options.prompt_kind);
    const auto out = net.forward(s.image, s.prompts);
    const bool no_target = !out.exists;
    for (std::size_t k = 0; k < out.sources.size(); ++k) {
      const auto pred = model::mask_from_logits(out.sources[k].mask_logits);
      EvalRecord r = score_sample(pred, no_target, s.targets[k], s.exists);
      r.id = rec.id;
      r.source = s.sources[k];
      r.case_label = rec.case_label;
      res.records.push_back(std::move(r));
    }
  }
  require(!res.records.empty(), ErrorKind::kUsage, "split " + split + " has no samples");
  res.report = build_report(split, res.records);
  return res;
}

}  // namespace omniseg::eval
