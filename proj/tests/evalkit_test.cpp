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

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <random>

#include "common/error.hpp"
#include "dataset_fixture.hpp"
#include "evalkit/metrics.hpp"
#include "oracles.hpp"

namespace omniseg::eval {
namespace {

mask::BinaryMask mask_from(int h, int w, const std::vector<int>& on) {
  mask::BinaryMask m(h, w);
  for (int i : on) m.set(i / w, i % w);
  return m;
}

EvalRecord raw_record(std::int64_t inter, std::int64_t uni, bool gt_empty, bool flagged,
                      double iou) {
  EvalRecord r;
  r.intersection = inter;
  r.union_ = uni;
  r.gt_empty = gt_empty;
  r.pred_no_target = flagged;
  r.iou = iou;
  return r;
}

TEST(ScoreSample, NoTargetConventions) {
  const mask::BinaryMask empty(4, 4);
  const auto blob = mask_from(4, 4, {0, 1, 4, 5});
  // True negative.
  EXPECT_EQ(score_sample(blob, true, empty, false).iou, 1.0);
  EXPECT_EQ(score_sample(empty, true, empty, false).iou, 1.0);
  // False positive on a no-target sample.
  const auto fp = score_sample(blob, false, empty, false);
  EXPECT_EQ(fp.iou, 0.0);
  EXPECT_EQ(fp.intersection, 0);
  EXPECT_EQ(fp.union_, 4);
  // A real target flagged as absent.
  const auto fn = score_sample(blob, true, blob, true);
  EXPECT_EQ(fn.iou, 0.0);
  EXPECT_EQ(fn.union_, 4);
}

TEST(ScoreSample, PixelIoU) {
  const auto gt = mask_from(4, 4, {0, 1, 2, 3});
  const auto pred = mask_from(4, 4, {2, 3, 4, 5});
  const auto r = score_sample(pred, false, gt, true);
  EXPECT_EQ(r.intersection, 2);
  EXPECT_EQ(r.union_, 6);
  EXPECT_EQ(r.iou, 1.0 / 3.0);
  EXPECT_THROW(score_sample(mask::BinaryMask(4, 5), false, gt, true), Error);
}

TEST(Metrics, GiouExamples) {
  EXPECT_EQ(giou({raw_record(1, 2, false, false, 0.5), raw_record(0, 0, true, true, 1.0)}), 0.75);
  EXPECT_EQ(giou({raw_record(0, 0, true, true, 1.0), raw_record(0, 0, true, true, 1.0)}), 1.0);
  EXPECT_THROW(giou({}), Error);
}

TEST(Metrics, CiouExamples) {
  std::vector<EvalRecord> recs = {raw_record(2, 6, false, false, 1.0 / 3.0)};
  EXPECT_EQ(ciou(recs), 1.0 / 3.0);
  recs.push_back(raw_record(0, 0, true, true, 1.0));
  EXPECT_EQ(ciou(recs), 1.0 / 3.0);
  recs.push_back(raw_record(0, 10, true, false, 0.0));
  EXPECT_EQ(ciou(recs), 2.0 / 16.0);
  EXPECT_EQ(ciou({raw_record(0, 0, true, true, 1.0)}), 1.0);
  EXPECT_THROW(ciou({}), Error);
}

TEST(Metrics, NoTargetAccuracy) {
  auto tn = raw_record(0, 0, true, true, 1.0);
  auto fp = raw_record(0, 3, true, false, 0.0);
  auto tp = raw_record(3, 4, false, false, 0.75);
  EXPECT_EQ(*n_acc({tn, tn, tp}), 1.0);
  EXPECT_EQ(*n_acc({fp, fp, tp}), 0.0);
  EXPECT_EQ(*n_acc({tn, tn, tn, fp, tp}), 0.75);
  EXPECT_FALSE(n_acc({tp}).has_value());
}

TEST(Metrics, PrecisionAtThreshold) {
  const auto nt = raw_record(0, 0, true, true, 1.0);
  EXPECT_EQ(pr_at({raw_record(8, 10, false, false, 0.8), raw_record(6, 10, false, false, 0.6), nt}, 0.7), 0.5);
  EXPECT_EQ(pr_at({raw_record(1, 10, false, false, 0.1), raw_record(9, 10, false, false, 0.9)}, 0.0), 1.0);
  // "exceeds": exactly at the threshold does not count.
  const auto at = score_sample(mask_from(1, 10, {0, 1, 2, 3, 4, 5, 6}), false,
                               mask_from(1, 10, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9}), true);
  ASSERT_EQ(at.iou, 0.7);
  EXPECT_EQ(pr_at({at}, 0.7), 0.0);
  EXPECT_EQ(pr_at({at}, 0.69), 1.0);
  EXPECT_THROW(pr_at({nt}, 0.7), Error);
}

using omniseg::testing::MetricCase;

std::vector<MetricCase> random_cases(int n, std::uint64_t seed) {
  return omniseg::testing::random_metric_cases(n, seed);
}

TEST(Metrics, MatchBruteForceRecountOn100RandomRecords) {
  const auto cases = random_cases(100, 21);
  std::vector<EvalRecord> recs;
  for (const auto& c : cases) recs.push_back(score_sample(c.pred, c.flagged, c.gt, c.exists));
  const auto want = omniseg::testing::recount_metrics(cases);
  EXPECT_EQ(giou(recs), want.giou);
  EXPECT_EQ(ciou(recs), want.ciou);
  EXPECT_EQ(*n_acc(recs), want.n_acc);
  EXPECT_EQ(pr_at(recs, 0.7), want.pr[0]);
  EXPECT_EQ(pr_at(recs, 0.8), want.pr[1]);
  EXPECT_EQ(pr_at(recs, 0.9), want.pr[2]);
  EXPECT_EQ(omniseg::testing::metric_mismatches(cases), 0);
}

TEST(Metrics, GiouMatchesRecomputationOn50Records) {
  const auto cases = random_cases(50, 22);
  std::vector<EvalRecord> recs;
  double sum = 0.0;
  for (const auto& c : cases) {
    recs.push_back(score_sample(c.pred, c.flagged, c.gt, c.exists));
    if (!c.exists) {
      sum += c.flagged ? 1.0 : 0.0;
    } else if (!c.flagged) {
      sum += mask::iou(c.pred, c.gt);
    }
  }
  EXPECT_NEAR(giou(recs), sum / 50.0, 1e-12);
}

TEST(Metrics, PermutationInvarianceAndBounds) {
  const auto cases = random_cases(60, 23);
  std::vector<EvalRecord> recs;
  for (const auto& c : cases) recs.push_back(score_sample(c.pred, c.flagged, c.gt, c.exists));
  std::mt19937_64 rng(24);
  for (int t = 0; t < 10; ++t) {
    auto shuffled = recs;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    EXPECT_EQ(ciou(shuffled), ciou(recs));
    EXPECT_NEAR(giou(shuffled), giou(recs), 1e-15);
    EXPECT_EQ(*n_acc(shuffled), *n_acc(recs));
  }
  for (double v : {ciou(recs), giou(recs), *n_acc(recs), pr_at(recs, 0.7)}) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Metrics, TrueNegativesNeverHurt) {
  const auto cases = random_cases(40, 25);
  std::vector<EvalRecord> recs;
  for (const auto& c : cases) recs.push_back(score_sample(c.pred, c.flagged, c.gt, c.exists));
  const mask::BinaryMask empty(5, 5);
  for (int i = 0; i < 5; ++i) {
    auto more = recs;
    more.push_back(score_sample(empty, true, empty, false));
    EXPECT_GE(giou(more), giou(recs));
    EXPECT_EQ(ciou(more), ciou(recs));
    recs = more;
  }
}

TEST(Metrics, PerfectAndEmptyPredictions) {
  const auto cases = random_cases(30, 26);
  std::vector<EvalRecord> perfect, blank;
  for (const auto& c : cases) {
    perfect.push_back(score_sample(c.gt, !c.exists, c.gt, c.exists));
    blank.push_back(score_sample(mask::BinaryMask(c.gt.height(), c.gt.width()), true, c.gt, c.exists));
  }
  EXPECT_EQ(ciou(perfect), 1.0);
  EXPECT_EQ(giou(perfect), 1.0);
  EXPECT_EQ(*n_acc(perfect), 1.0);
  EXPECT_EQ(*n_acc(blank), 1.0);
  EXPECT_EQ(pr_at(blank, 0.7), 0.0);
}

TEST(Report, JsonSchemaAndRecordRoundTrip) {
  const auto cases = random_cases(20, 27);
  std::vector<EvalRecord> recs;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    auto r = score_sample(cases[i].pred, cases[i].flagged, cases[i].gt, cases[i].exists);
    r.id = "s" + std::to_string(i);
    r.source = i % 2 ? synth::Source::kVisual : synth::Source::kText;
    r.case_label = cases[i].exists ? synth::CaseLabel::kOneVsOne : synth::CaseLabel::kNoTarget;
    recs.push_back(r);
  }
  const auto j = report_to_json(build_report("omni-test", recs));
  for (const char* key : {"split", "ciou", "giou", "n_acc", "pr", "per_case_counts", "per_source"})
    EXPECT_TRUE(j.contains(key)) << key;
  for (const char* key : {"0.7", "0.8", "0.9"}) EXPECT_TRUE(j["pr"].contains(key));
  EXPECT_TRUE(j["per_source"].contains("text"));
  EXPECT_TRUE(j["per_source"].contains("visual"));
  int counted = 0;
  for (const auto& [k, v] : j["per_case_counts"].items()) counted += v.get<int>();
  EXPECT_EQ(counted, 20);

  const auto path = std::filesystem::temp_directory_path() / "omniseg_eval_records.jsonl";
  write_records(path, recs);
  const auto back = read_records(path);
  ASSERT_EQ(back.size(), recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    EXPECT_EQ(back[i].id, recs[i].id);
    EXPECT_EQ(back[i].iou, recs[i].iou);
    EXPECT_EQ(back[i].union_, recs[i].union_);
    EXPECT_EQ(back[i].source, recs[i].source);
  }
  std::filesystem::remove(path);
}

TEST(Evaluate, ReplayFromSavedRecordsMatchesLiveRun) {
  model::SampleStore store(omniseg::testing::small_dataset("eval"));
  const model::OmniSegNet net(model::preset("desk"), 3);
  const auto live = evaluate(net, store, "omni-test");
  EXPECT_EQ(live.records.size(), 60u);
  const auto path = std::filesystem::temp_directory_path() / "omniseg_eval_replay.jsonl";
  write_records(path, live.records);
  const auto replay = build_report("omni-test", read_records(path));
  EXPECT_NEAR(replay.pooled.giou, live.report.pooled.giou, 1e-12);
  EXPECT_NEAR(replay.pooled.ciou, live.report.pooled.ciou, 1e-12);
  EXPECT_EQ(replay.pooled.n_acc, live.report.pooled.n_acc);
  for (const auto& [k, v] : live.report.pooled.pr) EXPECT_NEAR(replay.pooled.pr.at(k), v, 1e-12);
  EXPECT_EQ(report_to_json(replay), report_to_json(live.report));
  std::filesystem::remove(path);
}

TEST(Evaluate, PromptKindOverrideAndLimit) {
  model::SampleStore store(omniseg::testing::small_dataset("eval"));
  const model::OmniSegNet net(model::preset("desk"), 4);
  EvalOptions opt;
  opt.prompt_kind = synth::PromptKind::kBox;
  opt.limit = 5;
  const auto r = evaluate(net, store, "visual-test", opt);
  EXPECT_EQ(r.records.size(), 5u);
  EXPECT_THROW(evaluate(net, store, "no-such-split"), Error);
}

}  // namespace
}  // namespace omniseg::eval
