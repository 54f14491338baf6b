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

// Acceptance gate: one PASS/FAIL line per primary criterion. The exit code is
// nonzero when a check could not run; with --strict it is also nonzero when
// any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "evalkit/metrics.hpp"
#include "omnimodel/gradient_suite.hpp"
#include "oracles.hpp"
#include "synthref/dataset.hpp"
#include "trainer/mixer.hpp"
#include "trainer/trainer.hpp"

namespace fs = std::filesystem;
using namespace omniseg;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Outcome gradient_suite() {
  const auto r = model::run_gradient_suite(0);
  double worst = 0.0;
  std::string failed;
  for (const auto& c : r.results) {
    worst = std::max(worst, c.max_rel_error);
    if (!c.passed) failed += " " + c.name;
  }
  const bool pass = r.passed() && worst <= 1e-4 && r.seconds < 120.0;
  std::string d = std::to_string(r.results.size()) + " checks, max rel err " +
                  fmt("%.2e", worst) + ", " + fmt("%.1f", r.seconds) + " s";
  if (!failed.empty()) d += ", failed:" + failed;
  return {pass, d};
}

Outcome deformable_oracle() {
  double worst = 0.0;
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto c = testing::make_deform_case(5000 + s);
    const auto got = c->attn(c->query, c->reference, c->memory, c->shapes);
    const auto want = testing::dense_deform(*c);
    if (got.numel() != want.size()) return {false, "shape mismatch on instance " + std::to_string(s)};
    for (std::size_t i = 0; i < want.size(); ++i)
      worst = std::max(worst, std::abs(got.data()[i] - want[i]));
  }
  return {worst <= 1e-12, "50 instances, max abs diff " + fmt("%.2e", worst)};
}

Outcome metric_oracle() {
  const auto cases = testing::random_metric_cases(100, 31);
  const int mismatches = testing::metric_mismatches(cases);
  // No-target conventions: a correct no-target call scores 1, a miss 0.
  mask::BinaryMask empty(4, 4), some(4, 4);
  some.set(1, 1);
  const bool conventions = eval::score_sample(some, true, empty, false).iou == 1.0 &&
                           eval::score_sample(some, false, empty, false).iou == 0.0 &&
                           eval::score_sample(some, true, some, true).iou == 0.0;
  return {mismatches == 0 && conventions,
          "100 records, " + std::to_string(mismatches) + " metric mismatches, no-target conventions " +
              (conventions ? "hold" : "broken")};
}

Outcome prompt_synthesis() {
  const auto t = testing::check_prompt_synthesis(1000, 41);
  return {t.failures() == 0 && t.masks == 1000,
          std::to_string(t.masks) + " masks, loose boxes " + std::to_string(t.loose_boxes) +
              ", scribbles outside mask " + std::to_string(t.scribbles_outside) +
              ", RLE mismatches " + std::to_string(t.rle_mismatches)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::set<fs::path> relative_files(const fs::path& root) {
  std::set<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out.insert(fs::relative(e.path(), root));
  return out;
}

Outcome dataset_validator(const fs::path& primary, const fs::path& copy) {
  synth::DatasetConfig cfg;
  cfg.seed = 0;
  synth::build_dataset(cfg, primary);
  const auto report = synth::validate_dataset(primary);
  synth::build_dataset(cfg, copy);
  const auto a = relative_files(primary), b = relative_files(copy);
  std::size_t differing = a == b ? 0 : 1;
  for (const auto& f : a)
    if (b.count(f) && slurp(primary / f) != slurp(copy / f)) ++differing;
  const auto manifest = [&](const char* split) {
    return synth::load_manifest(primary, split).size();
  };
  const bool sizes = manifest("omni-train") == 2000 && manifest("text-test") == 300 &&
                     manifest("visual-test") == 300 && manifest("omni-test") == 300;
  std::string d = std::to_string(report.records) + " records, " +
                  std::to_string(report.violations.size()) + " violations, " +
                  std::to_string(a.size()) + " files, " + std::to_string(differing) +
                  " differ on regeneration";
  if (!sizes) d += ", split sizes off";
  if (!report.violations.empty()) d += ", first: " + report.violations.front();
  return {report.ok() && differing == 0 && sizes, d};
}

Outcome mixer() {
  trainer::BatchMixer mix(7, 2, 0);
  int text = 0, visual = 0;
  for (int i = 0; i < 9000; ++i) (mix.next() == synth::Source::kText ? text : visual)++;
  return {text == 7000 && visual == 2000,
          "9000 batches, " + std::to_string(text) + " text : " + std::to_string(visual) + " visual"};
}

struct DeskRun {
  Outcome target;
  Outcome ordering;
  json summary;
};

DeskRun desk_run(const fs::path& data, const fs::path& out) {
  DeskRun run;
  trainer::TrainConfig cfg;  // seed 0, desk preset, stages 600/600/800
  model::SampleStore store(data);
  model::OmniSegNet net(cfg.model_config(), cfg.seed);
  trainer::Trainer tr(cfg, store);
  const std::clock_t c0 = std::clock();
  const auto summary = tr.run(net, out);
  const double cpu_minutes = static_cast<double>(std::clock() - c0) / CLOCKS_PER_SEC / 60.0;

  const auto omni = eval::evaluate(net, store, "omni-test");
  const double giou = omni.report.pooled.giou;
  const double n_acc = omni.report.pooled.n_acc.value_or(0.0);
  const auto& stage2 = summary.stages.at(1);
  const bool frozen = stage2.frozen_hash_before == stage2.frozen_hash_after;
  run.target.pass = giou >= 0.70 && n_acc >= 0.80 && frozen && cpu_minutes <= 30.0;
  run.target.detail = "omni-test gIoU " + fmt("%.4f", giou) + " (>= 0.70), N-acc " +
                      fmt("%.4f", n_acc) + " (>= 0.80), stage-2 text encoder hash " +
                      (frozen ? "unchanged" : "changed") + ", " + fmt("%.1f", cpu_minutes) +
                      " CPU-min (<= 30)";

  json kinds = json::object();
  double by_kind[3] = {0, 0, 0};
  int k = 0;
  for (auto kind : {synth::PromptKind::kMask, synth::PromptKind::kBox, synth::PromptKind::kScribble}) {
    eval::EvalOptions o;
    o.prompt_kind = kind;
    by_kind[k] = eval::evaluate(net, store, "visual-test", o).report.pooled.giou;
    kinds[synth::prompt_kind_name(kind)] = by_kind[k++];
  }
  run.ordering.pass = by_kind[0] >= by_kind[1] && by_kind[1] >= by_kind[2];
  run.ordering.detail = "visual-test gIoU mask " + fmt("%.4f", by_kind[0]) + ", box " +
                        fmt("%.4f", by_kind[1]) + ", scribble " + fmt("%.4f", by_kind[2]);

  json evals = json::object();
  evals["omni-test"] = eval::report_to_json(omni.report);
  for (const char* split : {"text-test", "visual-test"})
    evals[split] = eval::report_to_json(eval::evaluate(net, store, split).report);
  run.summary = {{"train", trainer::train_summary_to_json(summary)},
                 {"cpu_minutes", cpu_minutes},
                 {"eval", evals},
                 {"visual_test_giou_by_prompt_kind", kinds}};
  return run;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance gate"};
  fs::path work = fs::temp_directory_path() / "omniseg_acceptance";
  bool strict = false;
  bool skip_training = false;
  app.add_option("--work-dir", work, "scratch directory for datasets and checkpoints");
  app.add_flag("--strict", strict, "exit nonzero when any criterion fails");
  app.add_flag("--skip-training", skip_training, "report the two training criteria as not run");
  CLI11_PARSE(app, argc, argv);

  fs::remove_all(work);
  fs::create_directories(work);
  const fs::path data = work / "data";

  int failed = 0, errors = 0;
  json results = json::array();
  auto report = [&](const std::string& name, const std::function<Outcome()>& check) {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
      ++errors;
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += !o.pass;
    std::printf("%s  %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), secs);
    std::fflush(stdout);
    results.push_back({{"criterion", name}, {"pass", o.pass}, {"detail", o.detail}});
  };

  report("gradient suite", gradient_suite);
  report("deformable-attention oracle", deformable_oracle);
  report("metric oracle", metric_oracle);
  report("prompt-synthesis properties", prompt_synthesis);
  report("dataset validator", [&] { return dataset_validator(data, work / "data_again"); });
  report("batch mixer", mixer);

  DeskRun desk;
  bool desk_ok = false;
  if (!skip_training) {
    try {
      desk = desk_run(data, work / "run");
      desk_ok = true;
    } catch (const std::exception& e) {
      desk.target = desk.ordering = {false, std::string("error: ") + e.what()};
      ++errors;
    }
  } else {
    desk.target = desk.ordering = {false, "not run (--skip-training)"};
  }
  report("desk training target", [&] { return desk.target; });
  report("prompt-type ordering", [&] { return desk.ordering; });

  json out = {{"criteria", results}};
  if (desk_ok) out["desk_run"] = desk.summary;
  std::ofstream(work / "acceptance.json") << out.dump(2) << "\n";
  std::printf("%d of %zu criteria passed; details in %s\n",
              static_cast<int>(results.size()) - failed, results.size(),
              (work / "acceptance.json").string().c_str());
  if (errors > 0) return 2;
  return strict && failed > 0 ? 1 : 0;
}
