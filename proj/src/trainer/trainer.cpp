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

#include "trainer/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "common/error.hpp"
#include "common/rng.hpp"
#include "tensorkit/ops.hpp"
#include "tensorkit/optim.hpp"
#include "trainer/mixer.hpp"

namespace omniseg::trainer {

using model::SourceFilter;
using tensor::Tensor;
using synth::PromptKind;

std::string stage_name(StageKind k) {
  switch (k) {
    case StageKind::kVlAlign: return "vl_align";
    case StageKind::kVisualTune: return "visual_tune";
    case StageKind::kJoint: return "joint";
  }
  return "?";
}

void TrainConfig::validate() const {
  require(batch_size > 0, ErrorKind::kConfig, "batch_size must be positive");
  require(std::isfinite(lr) && lr >= 0.0, ErrorKind::kConfig, "lr must be finite and >= 0");
  require(std::isfinite(power) && power > 0.0, ErrorKind::kConfig, "power must be positive");
  require(std::isfinite(weight_decay) && weight_decay >= 0.0, ErrorKind::kConfig,
          "weight_decay must be finite and >= 0");
  for (int s : stage_steps) require(s >= 0, ErrorKind::kConfig, "stage steps must be >= 0");
  require(text_quota >= 0 && visual_quota >= 0 && text_quota + visual_quota > 0,
          ErrorKind::kConfig, "mixer quotas must be nonnegative and not both zero");
  weights.validate();
  model_config();
}

model::ModelConfig TrainConfig::model_config() const {
  nlohmann::json j = model::config_to_json(model::preset(preset));
  for (const auto& [k, v] : model_overrides.items()) {
    require(j.contains(k), ErrorKind::kConfig, "unknown model field: " + k);
    j[k] = v;
  }
  model::ModelConfig c = model::config_from_json(j);
  c.validate();
  return c;
}

std::vector<StageConfig> TrainConfig::stages() const {
  return {{StageKind::kVlAlign, stage_steps[0], lr, {}},
          {StageKind::kVisualTune, stage_steps[1], lr, {frozen_prefix}},
          {StageKind::kJoint, stage_steps[2], lr, {}}};
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  require(used == v.size() && !v.empty(), ErrorKind::kConfig,
          "bad number for " + key + ": '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  fail(ErrorKind::kConfig, "bad boolean for " + key + ": '" + v + "'");
}

long long to_int(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  long long out = 0;
  try {
    out = std::stoll(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  require(used == v.size() && !v.empty(), ErrorKind::kConfig,
          "bad integer for " + key + ": '" + v + "'");
  return out;
}

nlohmann::json model_value(const std::string& key, const std::string& v) {
  if (v.find(',') != std::string::npos) {
    nlohmann::json arr = nlohmann::json::array();
    std::stringstream ss(v);
    std::string part;
    while (std::getline(ss, part, ',')) arr.push_back(to_int(key, trim(part)));
    return arr;
  }
  return to_int(key, v);
}

}  // namespace

TrainConfig parse_train_config(const std::string& text) {
  TrainConfig c;
  std::set<std::string> seen;
  std::stringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos, ErrorKind::kConfig,
            "line " + std::to_string(lineno) + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    require(seen.insert(key).second, ErrorKind::kConfig, "duplicate key: " + key);
    if (key == "seed") c.seed = static_cast<std::uint64_t>(to_int(key, val));
    else if (key == "preset") c.preset = val;
    else if (key == "batch_size") c.batch_size = static_cast<int>(to_int(key, val));
    else if (key == "lr") c.lr = to_double(key, val);
    else if (key == "power") c.power = to_double(key, val);
    else if (key == "weight_decay") c.weight_decay = to_double(key, val);
    else if (key == "stage1_steps") c.stage_steps[0] = static_cast<int>(to_int(key, val));
    else if (key == "stage2_steps") c.stage_steps[1] = static_cast<int>(to_int(key, val));
    else if (key == "stage3_steps") c.stage_steps[2] = static_cast<int>(to_int(key, val));
    else if (key == "lambda_mask") c.weights.mask = to_double(key, val);
    else if (key == "lambda_region") c.weights.region = to_double(key, val);
    else if (key == "lambda_nt") c.weights.nt = to_double(key, val);
    else if (key == "text_quota") c.text_quota = static_cast<int>(to_int(key, val));
    else if (key == "visual_quota") c.visual_quota = static_cast<int>(to_int(key, val));
    else if (key == "frozen_prefix") c.frozen_prefix = val;
    else if (key == "augment") c.augment = to_bool(key, val);
    else if (key.rfind("model.", 0) == 0) c.model_overrides[key.substr(6)] = model_value(key, val);
    else fail(ErrorKind::kConfig, "unknown config key: " + key);
  }
  if (c.preset == "paper-faithful" && !seen.count("lr")) c.lr = 1e-5;
  c.validate();
  return c;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  require(f.good(), ErrorKind::kIo, "cannot read config " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_train_config(ss.str());
}

nlohmann::json train_config_to_json(const TrainConfig& c) {
  return {{"seed", c.seed},
          {"preset", c.preset},
          {"model_overrides", c.model_overrides},
          {"batch_size", c.batch_size},
          {"lr", c.lr},
          {"power", c.power},
          {"weight_decay", c.weight_decay},
          {"stage_steps", c.stage_steps},
          {"lambda", {c.weights.mask, c.weights.region, c.weights.nt}},
          {"text_quota", c.text_quota},
          {"visual_quota", c.visual_quota},
          {"frozen_prefix", c.frozen_prefix},
          {"augment", c.augment}};
}

nlohmann::json step_log_to_json(const StepLog& s) {
  return {{"stage", s.stage},
          {"stage_name", stage_name(s.kind)},
          {"step", s.step},
          {"global_step", s.global_step},
          {"l_mask", s.loss.l_mask},
          {"l_region", s.loss.l_region},
          {"l_nt", s.loss.l_nt},
          {"l_total", s.loss.l_total},
          {"lr", s.lr}};
}

Trainer::Trainer(TrainConfig config, model::SampleStore& store)
    : config_(std::move(config)), store_(store) {
  config_.validate();
  const auto& recs = store_.records(synth::kTrainSplit);
  for (std::size_t i = 0; i < recs.size(); ++i) {
    if (recs[i].text) text_items_.push_back(i);
    if (recs[i].visual) visual_items_.push_back(i);
  }
  if (config_.augment) store_.set_reference_pool(synth::kTrainSplit);
}

namespace {

// Turns requires_grad off for the matching parameters while alive.
class FreezeGuard {
 public:
  FreezeGuard(const model::ParamStore& params, const std::vector<std::string>& prefixes) {
    for (std::size_t i = 0; i < params.names().size(); ++i) {
      bool frozen = false;
      for (const auto& p : prefixes) frozen |= params.names()[i].rfind(p, 0) == 0;
      Tensor t = params.tensors()[i];
      if (frozen) {
        t.set_requires_grad(false);
        frozen_.push_back(t);
      } else {
        trainable_.push_back(t);
      }
    }
  }
  ~FreezeGuard() {
    for (auto& t : frozen_) t.set_requires_grad(true);
  }
  FreezeGuard(const FreezeGuard&) = delete;
  FreezeGuard& operator=(const FreezeGuard&) = delete;

  std::vector<Tensor>& trainable() { return trainable_; }

 private:
  std::vector<Tensor> frozen_;
  std::vector<Tensor> trainable_;
};

std::uint64_t frozen_hash(const model::ParamStore& params,
                          const std::vector<std::string>& prefixes) {
  std::uint64_t h = 0;
  for (const auto& p : prefixes) h = mix64(h ^ params.hash(p));
  return h;
}

std::vector<std::vector<double>> snapshot(const model::ParamStore& params) {
  std::vector<std::vector<double>> out;
  out.reserve(params.tensors().size());
  for (const auto& t : params.tensors()) out.emplace_back(t.data().begin(), t.data().end());
  return out;
}

void restore(const model::ParamStore& params, const std::vector<std::vector<double>>& values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    Tensor t = params.tensors()[i];
    std::copy(values[i].begin(), values[i].end(), t.mutable_data().begin());
  }
}

}  // namespace

StageResult Trainer::run_stage(model::OmniSegNet& net, int stage, const StageConfig& sc,
                               const LogSink& sink, const std::filesystem::path& last_good) {
  require(sc.steps >= 0, ErrorKind::kConfig, "stage steps must be >= 0");
  const auto& recs = store_.records(synth::kTrainSplit);
  const std::uint64_t base = derive_seed(config_.seed, 0x5747 + static_cast<std::uint64_t>(stage));
  const bool wants_text = sc.kind != StageKind::kVisualTune;
  const bool wants_visual = sc.kind != StageKind::kVlAlign;
  require(sc.steps == 0 || !wants_text || !text_items_.empty(), ErrorKind::kUsage,
          "training split has no text samples");
  require(sc.steps == 0 || !wants_visual || !visual_items_.empty(), ErrorKind::kUsage,
          "training split has no visual samples");
  std::optional<IndexStream> text_stream, visual_stream;
  if (sc.steps > 0 && wants_text) text_stream.emplace(text_items_.size(), derive_seed(base, 1));
  if (sc.steps > 0 && wants_visual) visual_stream.emplace(visual_items_.size(), derive_seed(base, 2));
  BatchMixer mixer(config_.text_quota, config_.visual_quota, derive_seed(base, 3));
  std::mt19937_64 kind_rng(derive_seed(base, 4));
  std::mt19937_64 augment_rng(derive_seed(base, 5));
  model::Augmentation augmentation;
  augmentation.flip = augmentation.resample_reference = config_.augment;
  const int grid = net.config().seg_query_grid;

  StageResult res;
  res.stage = stage;
  res.kind = sc.kind;
  res.steps = sc.steps;
  res.frozen_hash_before = frozen_hash(net.params(), sc.frozen_prefixes);

  FreezeGuard guard(net.params(), sc.frozen_prefixes);
  std::vector<Tensor>& trainable = guard.trainable();
  tensor::AdamWState opt;
  tensor::AdamWConfig opt_cfg;
  opt_cfg.weight_decay = config_.weight_decay;

  std::vector<std::vector<double>> good = snapshot(net.params());
  std::vector<double> recent;
  for (int step = 0; step < sc.steps; ++step) {
    synth::Source batch_source = synth::Source::kText;
    if (sc.kind == StageKind::kVisualTune) batch_source = synth::Source::kVisual;
    else if (sc.kind == StageKind::kJoint) batch_source = mixer.next();
    std::optional<PromptKind> kind;
    if (sc.kind == StageKind::kVisualTune)
      kind = static_cast<PromptKind>(std::uniform_int_distribution<int>(0, 2)(kind_rng));
    const SourceFilter filter = sc.kind == StageKind::kVlAlign      ? SourceFilter::kTextOnly
                                : sc.kind == StageKind::kVisualTune ? SourceFilter::kVisualOnly
                                                                    : SourceFilter::kAll;

    objective::LossBreakdown mean_loss;
    const double inv = 1.0 / config_.batch_size;
    std::vector<std::vector<double>> candidate = snapshot(net.params());
    auto abort = [&](const std::string& what) {
      for (Tensor t : net.params().tensors()) t.zero_grad();
      restore(net.params(), good);
      if (!last_good.empty()) net.save(last_good);
      fail(ErrorKind::kNumeric, what + " at stage " + std::to_string(stage) + " step " +
                                    std::to_string(step));
    };
    for (int b = 0; b < config_.batch_size; ++b) {
      const std::size_t item = batch_source == synth::Source::kText
                                   ? text_items_[text_stream->next()]
                                   : visual_items_[visual_stream->next()];
      const model::PreparedSample s =
          config_.augment
              ? store_.prepare_augmented(recs[item], filter, kind, augmentation, augment_rng)
              : store_.prepare(recs[item], filter, kind);
      objective::SampleLoss sl;
      try {
        const model::ForwardOutput out = net.forward(s.image, s.prompts);
        sl = objective::sample_loss(out, s.targets, s.exists, grid, config_.weights);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::kNumeric) throw;
        abort("non-finite loss on " + s.id);
      }
      tensor::backward(tensor::scale(sl.total, inv));
      mean_loss.l_mask += sl.breakdown.l_mask * inv;
      mean_loss.l_region += sl.breakdown.l_region * inv;
      mean_loss.l_nt += sl.breakdown.l_nt * inv;
      mean_loss.l_total += sl.breakdown.l_total * inv;
    }
    good = std::move(candidate);

    const double lr = tensor::poly_decay_lr(step, sc.steps, sc.lr0, config_.power);
    std::vector<std::vector<double>> grads;
    grads.reserve(trainable.size());
    for (auto& t : trainable) grads.push_back(t.grad());
    try {
      tensor::adamw_step(trainable, grads, opt, lr, opt_cfg);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kNumeric) throw;
      abort("non-finite gradient");
    }
    for (auto& t : trainable) t.zero_grad();

    if (step == 0) res.first_loss = mean_loss.l_total;
    recent.push_back(mean_loss.l_total);
    if (sink) {
      StepLog log;
      log.stage = stage;
      log.kind = sc.kind;
      log.step = step;
      log.lr = lr;
      log.loss = mean_loss;
      sink(log);
    }
  }
  const std::size_t tail = std::min<std::size_t>(20, recent.size());
  for (std::size_t i = recent.size() - tail; i < recent.size(); ++i)
    res.final_loss += recent[i] / static_cast<double>(tail);
  res.frozen_hash_after = frozen_hash(net.params(), sc.frozen_prefixes);
  return res;
}

nlohmann::json stage_result_to_json(const StageResult& r) {
  return {{"stage", r.stage},
          {"stage_name", stage_name(r.kind)},
          {"steps", r.steps},
          {"first_loss", r.first_loss},
          {"final_loss", r.final_loss},
          {"frozen_hash_before", r.frozen_hash_before},
          {"frozen_hash_after", r.frozen_hash_after},
          {"checkpoint", r.checkpoint.string()}};
}

nlohmann::json train_summary_to_json(const TrainSummary& s) {
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& r : s.stages) stages.push_back(stage_result_to_json(r));
  return {{"stages", std::move(stages)}, {"seconds", s.seconds}};
}

TrainSummary Trainer::run(model::OmniSegNet& net, const std::filesystem::path& out,
                          int first_stage) {
  require(first_stage >= 1 && first_stage <= 3, ErrorKind::kUsage,
          "first stage must be 1, 2 or 3");
  std::filesystem::create_directories(out);
  const auto t0 = std::chrono::steady_clock::now();
  const auto plan = config_.stages();
  std::ofstream log(out / "train_log.jsonl",
                    first_stage == 1 ? std::ios::trunc : std::ios::app);
  require(log.good(), ErrorKind::kIo, "cannot write training log under " + out.string());
  std::int64_t global = 0;
  for (int i = 0; i < first_stage - 1; ++i) global += plan[i].steps;
  TrainSummary summary;
  for (int stage = first_stage; stage <= 3; ++stage) {
    const StageConfig& sc = plan[stage - 1];
    StageResult r = run_stage(
        net, stage, sc,
        [&](const StepLog& s) {
          StepLog g = s;
          g.global_step = global + s.step;
          log << step_log_to_json(g).dump() << '\n';
          log.flush();
        },
        out / "last_good.ckpt");
    global += sc.steps;
    r.checkpoint = out / ("stage" + std::to_string(stage) + ".ckpt");
    net.save(r.checkpoint);
    summary.stages.push_back(r);
  }
  summary.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return summary;
}

}  // namespace omniseg::trainer
