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

#include <cmath>
#include <random>

#include "common/error.hpp"
#include "objective/loss.hpp"
#include "tensorkit/ops.hpp"
#include "test_util.hpp"

namespace omniseg::objective {
namespace {

using omniseg::testing::random_tensor;
using tensor::Tensor;

mask::BinaryMask random_mask(int h, int w, std::mt19937_64& rng) {
  mask::BinaryMask m(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) m.set(y, x, rng() % 3 == 0);
  return m;
}

double naive_bce(double logit, double target) {
  const double p = 1.0 / (1.0 + std::exp(-logit));
  return -(target * std::log(p) + (1.0 - target) * std::log(1.0 - p));
}

TEST(MaskLoss, ZeroLogitsGiveLn2) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 5; ++i) {
    const auto gt = random_mask(7, 9, rng);
    EXPECT_NEAR(mask_loss(Tensor::zeros({7, 9}), gt).item(), std::log(2.0), 1e-15);
  }
}

TEST(MaskLoss, SaturatedCorrectLogitsApproachZero) {
  std::mt19937_64 rng(2);
  const auto gt = random_mask(6, 6, rng);
  std::vector<double> z(36);
  for (int i = 0; i < 36; ++i) z[i] = gt.bits()[i] ? 40.0 : -40.0;
  EXPECT_LT(mask_loss(Tensor::from({6, 6}, z), gt).item(), 1e-15);
}

TEST(MaskLoss, MatchesNaivePerPixelOracle) {
  std::mt19937_64 rng(3);
  const auto gt = random_mask(8, 5, rng);
  const auto z = random_tensor({8, 5}, rng, false, -4.0, 4.0);
  double want = 0.0;
  for (int i = 0; i < 40; ++i) want += naive_bce(z.data()[i], gt.bits()[i]);
  EXPECT_NEAR(mask_loss(z, gt).item(), want / 40.0, 1e-12);
}

TEST(MaskLoss, SizeMismatchIsRejected) {
  try {
    mask_loss(Tensor::zeros({4, 4}), mask::BinaryMask(4, 5));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDimension);
  }
}

TEST(RegionLoss, AllOnesGroundTruthGivesAllOnesTargets) {
  mask::BinaryMask gt(64, 64);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) gt.set(y, x);
  for (double v : region_targets(gt, 4).values) EXPECT_EQ(v, 1.0);
  EXPECT_LT(region_loss(Tensor::full({16}, 40.0), gt, 4).item(), 1e-15);
}

TEST(RegionLoss, CheckerboardTargetsAreOneHalfAndMinimisedAtZeroLogit) {
  mask::BinaryMask gt(8, 8);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) gt.set(y, x, (x + y) % 2 == 0);
  for (double v : region_targets(gt, 4).values) EXPECT_EQ(v, 0.5);
  const double at_half = region_loss(Tensor::zeros({16}), gt, 4).item();
  EXPECT_NEAR(at_half, std::log(2.0), 1e-15);
  for (double z : {-0.2, -0.01, 0.01, 0.2})
    EXPECT_GT(region_loss(Tensor::full({16}, z), gt, 4).item(), at_half);
  Tensor logits = Tensor::zeros({16}, true);
  tensor::backward(region_loss(logits, gt, 4));
  for (double g : logits.grad()) EXPECT_EQ(g, 0.0);
}

TEST(RegionLoss, WrongLogitCountIsRejected) {
  EXPECT_THROW(region_loss(Tensor::zeros({9}), mask::BinaryMask(8, 8), 4), Error);
}

TEST(NtLoss, HalfProbabilityGivesLn2) {
  EXPECT_NEAR(nt_loss_value(0.5, true), std::log(2.0), 1e-15);
  EXPECT_NEAR(nt_loss_value(0.5, false), std::log(2.0), 1e-15);
  EXPECT_NEAR(nt_loss(Tensor::zeros({1, 1}), true).item(), std::log(2.0), 1e-15);
  EXPECT_NEAR(nt_loss(Tensor::zeros({1, 1}), false).item(), std::log(2.0), 1e-15);
}

TEST(NtLoss, ConfidentCorrectPredictionApproachesZero) {
  EXPECT_LT(nt_loss_value(1.0 - 1e-12, true), 1e-11);
  EXPECT_LT(nt_loss(Tensor::full({1, 1}, 40.0), true).item(), 1e-15);
}

TEST(NtLoss, GradientSignFollowsLabel) {
  for (double z : {-3.0, 0.0, 2.5}) {
    Tensor pos = Tensor::full({1, 1}, z, true);
    tensor::backward(nt_loss(pos, true));
    EXPECT_LT(pos.grad()[0], 0.0);
    Tensor neg = Tensor::full({1, 1}, z, true);
    tensor::backward(nt_loss(neg, false));
    EXPECT_GT(neg.grad()[0], 0.0);
  }
}

TEST(NtLoss, ProbabilityOutsideOpenIntervalIsRejected) {
  EXPECT_THROW(nt_loss_value(0.0, true), Error);
  EXPECT_THROW(nt_loss_value(1.0, false), Error);
}

TEST(TotalLoss, WeightExamples) {
  EXPECT_EQ(weighted_total(0.5, 0.25, 0.1, {1.0, 0.0, 0.0}), 0.5);
  EXPECT_EQ(weighted_total(0.0, 0.0, 0.0, {}), 0.0);
  EXPECT_NEAR(weighted_total(0.5, 0.25, 0.1, {1.0, 0.4, 0.1}), 0.61, 1e-15);
  const LossWeights defaults;
  EXPECT_EQ(defaults.mask, 1.0);
  EXPECT_EQ(defaults.region, 0.4);
  EXPECT_EQ(defaults.nt, 0.1);
}

TEST(TotalLoss, LinearInWeights) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  for (int i = 0; i < 200; ++i) {
    const double a = u(rng), m = u(rng), r = u(rng), n = u(rng);
    const LossWeights w{u(rng), u(rng), u(rng)};
    const LossWeights scaled{a * w.mask, a * w.region, a * w.nt};
    EXPECT_NEAR(weighted_total(m, r, n, scaled), a * weighted_total(m, r, n, w), 1e-12);
  }
}

TEST(TotalLoss, InvalidWeightsAreRejected) {
  EXPECT_THROW((LossWeights{-0.1, 1.0, 1.0}.validate()), Error);
  EXPECT_THROW((LossWeights{0.0, 0.0, 0.0}.validate()), Error);
  EXPECT_THROW((LossWeights{std::nan(""), 1.0, 1.0}.validate()), Error);
  EXPECT_NO_THROW((LossWeights{0.0, 0.0, 1.0}.validate()));
}

model::SourceOutput fake_source(std::mt19937_64& rng, int size, int grid) {
  model::SourceOutput s;
  s.mask_logits = random_tensor({size, size}, rng, true, -3.0, 3.0);
  s.region_logits = random_tensor({grid * grid}, rng, true, -3.0, 3.0);
  s.exist_logit = random_tensor({1, 1}, rng, true, -3.0, 3.0);
  return s;
}

TEST(SampleLoss, AveragesComponentsOverSources) {
  std::mt19937_64 rng(5);
  model::ForwardOutput out;
  out.sources.push_back(fake_source(rng, 8, 2));
  out.sources.push_back(fake_source(rng, 8, 2));
  const std::vector<mask::BinaryMask> targets = {random_mask(8, 8, rng), random_mask(8, 8, rng)};
  const LossWeights w{1.0, 0.4, 0.1};
  const auto sl = sample_loss(out, targets, true, 2, w);
  double m = 0, r = 0, n = 0;
  for (int k = 0; k < 2; ++k) {
    m += mask_loss(out.sources[k].mask_logits, targets[k]).item() / 2;
    r += region_loss(out.sources[k].region_logits, targets[k], 2).item() / 2;
    n += nt_loss(out.sources[k].exist_logit, true).item() / 2;
  }
  EXPECT_NEAR(sl.breakdown.l_mask, m, 1e-14);
  EXPECT_NEAR(sl.breakdown.l_region, r, 1e-14);
  EXPECT_NEAR(sl.breakdown.l_nt, n, 1e-14);
  EXPECT_NEAR(sl.breakdown.l_total, m + 0.4 * r + 0.1 * n, 1e-14);
  EXPECT_NEAR(sl.total.item(), sl.breakdown.l_total, 1e-14);
  EXPECT_GE(sl.breakdown.l_mask, 0.0);
  EXPECT_GE(sl.breakdown.l_region, 0.0);
  EXPECT_GE(sl.breakdown.l_nt, 0.0);
}

TEST(SampleLoss, TargetCountMustMatchSources) {
  std::mt19937_64 rng(6);
  model::ForwardOutput out;
  out.sources.push_back(fake_source(rng, 8, 2));
  EXPECT_THROW(sample_loss(out, {}, true, 2, {}), Error);
  EXPECT_THROW(sample_loss(model::ForwardOutput{}, {}, true, 2, {}), Error);
}

TEST(SampleLoss, NoTargetUsesEmptyMask) {
  std::mt19937_64 rng(7);
  model::ForwardOutput out;
  out.sources.push_back(fake_source(rng, 6, 2));
  const mask::BinaryMask empty(6, 6);
  const auto sl = sample_loss(out, {empty}, false, 2, {1.0, 0.0, 0.0});
  double want = 0.0;
  for (double z : out.sources[0].mask_logits.data()) want += naive_bce(z, 0.0);
  EXPECT_NEAR(sl.breakdown.l_total, want / 36.0, 1e-12);
}

}  // namespace
}  // namespace omniseg::objective
