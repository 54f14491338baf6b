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
#include "tensorkit/gradcheck.hpp"
#include "tensorkit/ops.hpp"
#include "tensorkit/optim.hpp"
#include "test_util.hpp"

namespace omniseg::tensor {
namespace {

using omniseg::testing::probe;
using omniseg::testing::random_tensor;

void expect_error(ErrorKind kind, const std::function<void()>& fn) {
  try {
    fn();
    ADD_FAILURE() << "expected an omniseg::Error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), kind) << e.what();
  }
}

void expect_gradcheck(const std::string& name,
                      const std::function<Tensor()>& loss,
                      const std::vector<Tensor>& inputs) {
  const auto r = check_gradients(name, loss, inputs);
  EXPECT_TRUE(r.passed) << name << " max rel error " << r.max_rel_error;
  EXPECT_GT(r.entries_checked, 0u);
}

TEST(Conv2d, UnitKernelIsIdentity) {
  std::mt19937_64 rng(1);
  auto x = random_tensor({1, 1, 3, 4}, rng, false);
  auto w = Tensor::full({1, 1, 1, 1}, 1.0);
  auto y = conv2d(x, w, Tensor(), 1, 0);
  ASSERT_EQ(y.shape(), x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i)
    EXPECT_EQ(y.data()[i], x.data()[i]);
}

TEST(Conv2d, ZeroKernelGivesZeros) {
  std::mt19937_64 rng(2);
  auto x = random_tensor({1, 2, 5, 5}, rng, false);
  auto y = conv2d(x, Tensor::zeros({3, 2, 3, 3}), Tensor(), 2, 1);
  EXPECT_EQ(y.shape(), (Shape{1, 3, 3, 3}));
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(Conv2d, ForcedArithmetic) {
  auto x = Tensor::from({1, 1, 2, 2}, {1, 2, 3, 4});
  auto y = conv2d(x, Tensor::full({1, 1, 2, 2}, 1.0), Tensor(), 1, 0);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_EQ(y.item(), 10.0);
}

TEST(Conv2d, OutputExtent) {
  auto x = Tensor::zeros({2, 3, 9, 7});
  auto y = conv2d(x, Tensor::zeros({4, 3, 3, 2}), Tensor(), 2, 1);
  // floor((9+2-3)/2)+1 = 5, floor((7+2-2)/2)+1 = 4
  EXPECT_EQ(y.shape(), (Shape{2, 4, 5, 4}));
}

TEST(Conv2d, ShapeErrors) {
  expect_error(ErrorKind::kDimension, [] {
    conv2d(Tensor::zeros({1, 2, 4, 4}), Tensor::zeros({1, 3, 3, 3}), Tensor(),
           1, 0);
  });
  expect_error(ErrorKind::kDimension, [] {
    conv2d(Tensor::zeros({1, 1, 2, 2}), Tensor::zeros({1, 1, 5, 5}), Tensor(),
           1, 1);
  });
}

TEST(Conv2d, GradientCheck) {
  std::mt19937_64 rng(3);
  auto x = random_tensor({2, 2, 5, 4}, rng);
  auto w = random_tensor({3, 2, 3, 2}, rng);
  auto b = random_tensor({3}, rng);
  expect_gradcheck("conv2d",
                   [&] { return probe(conv2d(x, w, b, 2, 1), 11); },
                   {x, w, b});
}

// Naive multi-head attention core.
std::vector<double> attention_oracle(const Tensor& q, const Tensor& k,
                                     const Tensor& v, int heads) {
  const int n = q.dim(0), d = q.dim(1), m = k.dim(0), dh = d / heads;
  std::vector<double> out(static_cast<std::size_t>(n) * d, 0.0);
  for (int h = 0; h < heads; ++h)
    for (int i = 0; i < n; ++i) {
      std::vector<double> s(m);
      double mx = -1e300;
      for (int j = 0; j < m; ++j) {
        double dot = 0;
        for (int c = 0; c < dh; ++c)
          dot += q.data()[i * d + h * dh + c] * k.data()[j * d + h * dh + c];
        s[j] = dot / std::sqrt(static_cast<double>(dh));
        mx = std::max(mx, s[j]);
      }
      double z = 0;
      for (int j = 0; j < m; ++j) z += (s[j] = std::exp(s[j] - mx));
      for (int j = 0; j < m; ++j)
        for (int c = 0; c < dh; ++c)
          out[i * d + h * dh + c] += s[j] / z * v.data()[j * d + h * dh + c];
    }
  return out;
}

TEST(Attention, SingleKeyReturnsValueRow) {
  std::mt19937_64 rng(4);
  auto q = random_tensor({5, 8}, rng, false);
  auto k = random_tensor({1, 8}, rng, false);
  auto v = random_tensor({1, 8}, rng, false);
  auto y = attention_core(q, k, v, 2, {});
  for (int i = 0; i < 5; ++i)
    for (int c = 0; c < 8; ++c) EXPECT_DOUBLE_EQ(y.data()[i * 8 + c], v.data()[c]);
}

TEST(Attention, IdenticalKeysGiveUniformWeights) {
  std::mt19937_64 rng(5);
  auto q = random_tensor({3, 4}, rng, false);
  auto row = random_tensor({1, 4}, rng, false);
  auto k = concat_rows({row, row, row, row, row});
  auto v = random_tensor({5, 4}, rng, false);
  std::vector<double> w;
  attention_core(q, k, v, 2, {}, &w);
  for (double x : w) EXPECT_NEAR(x, 0.2, 1e-15);
}

TEST(Attention, MatchesDenseOracle) {
  std::mt19937_64 rng(6);
  auto q = random_tensor({3, 8}, rng, false);
  auto k = random_tensor({4, 8}, rng, false);
  auto v = random_tensor({4, 8}, rng, false);
  auto y = attention_core(q, k, v, 2, {});
  const auto expect = attention_oracle(q, k, v, 2);
  for (std::size_t i = 0; i < expect.size(); ++i)
    EXPECT_NEAR(y.data()[i], expect[i], 1e-12);
}

TEST(Attention, WeightRowsSumToOneAndMaskedKeysGetZero) {
  std::mt19937_64 rng(7);
  auto q = random_tensor({6, 16}, rng, false, -3, 3);
  auto k = random_tensor({9, 16}, rng, false, -3, 3);
  auto v = random_tensor({9, 16}, rng, false);
  std::vector<std::uint8_t> valid{1, 1, 0, 1, 0, 1, 1, 1, 0};
  std::vector<double> w;
  attention_core(q, k, v, 4, valid, &w);
  for (int h = 0; h < 4; ++h)
    for (int i = 0; i < 6; ++i) {
      double s = 0;
      for (int j = 0; j < 9; ++j) {
        const double a = w[(h * 6 + i) * 9 + j];
        if (!valid[j]) EXPECT_EQ(a, 0.0);
        s += a;
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
}

TEST(Attention, Errors) {
  expect_error(ErrorKind::kConfig, [] {
    attention_core(Tensor::zeros({2, 6}), Tensor::zeros({3, 6}),
                   Tensor::zeros({3, 6}), 4, {});
  });
  expect_error(ErrorKind::kUsage, [] {
    attention_core(Tensor::zeros({2, 4}), Tensor::zeros({2, 4}),
                   Tensor::zeros({2, 4}), 2, {0, 0});
  });
}

TEST(Attention, GradientCheck) {
  std::mt19937_64 rng(8);
  auto q = random_tensor({3, 8}, rng);
  auto k = random_tensor({5, 8}, rng);
  auto v = random_tensor({5, 8}, rng);
  std::vector<std::uint8_t> valid{1, 0, 1, 1, 1};
  expect_gradcheck("attention",
                   [&] { return probe(attention_core(q, k, v, 2, valid), 12); },
                   {q, k, v});
}

TEST(BilinearSample, CellCentreIsExact) {
  std::mt19937_64 rng(9);
  auto f = random_tensor({2, 3, 4}, rng, false);
  // Centre of cell (row 1, col 2): x = 2.5/4, y = 1.5/3.
  auto y = bilinear_sample(f, Tensor::from({1, 2}, {2.5 / 4, 1.5 / 3}));
  EXPECT_DOUBLE_EQ(y.data()[0], f.data()[0 * 12 + 1 * 4 + 2]);
  EXPECT_DOUBLE_EQ(y.data()[1], f.data()[1 * 12 + 1 * 4 + 2]);
}

TEST(BilinearSample, CentreOfTwoByTwoIsAverage) {
  auto f = Tensor::from({1, 2, 2}, {0, 1, 2, 3});
  auto y = bilinear_sample(f, Tensor::from({1, 2}, {0.5, 0.5}));
  EXPECT_DOUBLE_EQ(y.item(), 1.5);
}

TEST(BilinearSample, OutOfRangeClampsToBorder) {
  std::mt19937_64 rng(10);
  auto f = random_tensor({3, 5, 6}, rng, false);
  auto a = bilinear_sample(f, Tensor::from({1, 2}, {-0.3, 0.5}));
  auto b = bilinear_sample(f, Tensor::from({1, 2}, {0.0, 0.5}));
  for (int c = 0; c < 3; ++c) EXPECT_DOUBLE_EQ(a.data()[c], b.data()[c]);
  // Clamp-then-interpolate oracle: x pins to column 0, y = 0.5*5-0.5 = 2.
  for (int c = 0; c < 3; ++c)
    EXPECT_DOUBLE_EQ(a.data()[c], f.data()[c * 30 + 2 * 6 + 0]);
}

TEST(BilinearSample, LinearBetweenNeighbours) {
  std::mt19937_64 rng(11);
  auto f = random_tensor({1, 4, 4}, rng, false);
  std::uniform_real_distribution<double> t(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const double a = t(rng);
    // Between centres of (1,1) and (1,2) along x.
    const double x = (1.5 + a) / 4, y = 1.5 / 4;
    auto s = bilinear_sample(f, Tensor::from({1, 2}, {x, y}));
    const double expect =
        (1 - a) * f.data()[1 * 4 + 1] + a * f.data()[1 * 4 + 2];
    EXPECT_NEAR(s.item(), expect, 1e-14);
  }
}

TEST(BilinearSample, GradientCheck) {
  std::mt19937_64 rng(12);
  auto f = random_tensor({3, 4, 5}, rng);
  auto p = random_tensor({6, 2}, rng, true, 0.15, 0.85);
  expect_gradcheck("bilinear_sample",
                   [&] { return probe(bilinear_sample(f, p), 13); }, {f, p});
}

TEST(MsDeformSample, MatchesPerLevelBilinearSampling) {
  std::mt19937_64 rng(13);
  const int heads = 2, points = 3, d = 4;
  std::vector<LevelShape> levels{{3, 4, 0}, {2, 2, 12}};
  auto value = random_tensor({16, d}, rng, false);
  auto loc = random_tensor({2, heads * 2 * points * 2}, rng, false, -0.1, 1.1);
  auto w = random_tensor({2, heads * 2 * points}, rng, false);
  auto out = ms_deform_sample(value, levels, loc, w, heads, points);
  const int dh = d / heads, L = 2, S = heads * L * points;
  for (int q = 0; q < 2; ++q)
    for (int h = 0; h < heads; ++h) {
      std::vector<double> acc(dh, 0.0);
      for (int l = 0; l < L; ++l) {
        const auto& lv = levels[l];
        // [dh, H, W] map for this head and level.
        std::vector<double> fm(static_cast<std::size_t>(dh) * lv.height * lv.width);
        for (int t = 0; t < lv.height * lv.width; ++t)
          for (int c = 0; c < dh; ++c)
            fm[c * lv.height * lv.width + t] =
                value.data()[(lv.start + t) * d + h * dh + c];
        auto fmap = Tensor::from({dh, lv.height, lv.width}, fm);
        for (int p = 0; p < points; ++p) {
          const int s = (h * L + l) * points + p;
          auto pt = Tensor::from(
              {1, 2}, {loc.data()[q * 2 * S + 2 * s], loc.data()[q * 2 * S + 2 * s + 1]});
          auto smp = bilinear_sample(fmap, pt);
          for (int c = 0; c < dh; ++c) acc[c] += w.data()[q * S + s] * smp.data()[c];
        }
      }
      for (int c = 0; c < dh; ++c)
        EXPECT_NEAR(out.data()[q * d + h * dh + c], acc[c], 1e-12);
    }
}

TEST(MsDeformSample, GradientCheck) {
  std::mt19937_64 rng(14);
  const int heads = 2, points = 2;
  std::vector<LevelShape> levels{{4, 3, 0}, {2, 2, 12}, {1, 1, 16}};
  auto value = random_tensor({17, 6}, rng);
  auto loc = random_tensor({3, heads * 3 * points * 2}, rng, true, 0.2, 0.8);
  auto w = random_tensor({3, heads * 3 * points}, rng);
  expect_gradcheck("ms_deform_sample",
                   [&] {
                     return probe(
                         ms_deform_sample(value, levels, loc, w, heads, points),
                         15);
                   },
                   {value, loc, w});
}

TEST(Backward, SumGivesOnes) {
  auto x = Tensor::from({2, 3}, {1, -2, 3, 4, 5, -6}, true);
  backward(sum(x));
  for (double g : x.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, HalfSquaredNormGivesX) {
  auto x = Tensor::from({4}, {0.5, -1.5, 2.0, 3.25}, true);
  backward(scale(sum(mul(x, x)), 0.5));
  const auto g = x.grad();
  for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(g[i], x.data()[i]);
}

TEST(Backward, NonScalarLossIsUsageError) {
  auto x = Tensor::from({2}, {1, 2}, true);
  expect_error(ErrorKind::kUsage, [&] { backward(scale(x, 2.0)); });
}

TEST(Backward, SharedSubgraphVisitedOnce) {
  auto x = Tensor::from({3}, {1, 2, 3}, true);
  auto y = mul(x, x);
  auto loss = sum(add(y, y));  // d/dx = 4x
  EXPECT_EQ(Graph::trace(loss).size(), 3u);
  backward(loss);
  const auto g = x.grad();
  for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(g[i], 4 * x.data()[i]);
}

TEST(Backward, DeterministicAcrossRuns) {
  auto run = [] {
    std::mt19937_64 rng(21);
    auto a = random_tensor({4, 6}, rng);
    auto w = random_tensor({6, 8}, rng);
    auto q = gelu(linear(a, w, Tensor()));
    auto loss = mean(sigmoid(attention_core(q, q, q, 2, {})));
    backward(loss);
    return std::pair{a.grad(), w.grad()};
  };
  const auto first = run();
  const auto second = run();
  EXPECT_EQ(first.first, second.first);
  EXPECT_EQ(first.second, second.second);
}

TEST(Backward, NoGradGuardRecordsNothing) {
  auto x = Tensor::from({2}, {1, 2}, true);
  NoGradGuard guard;
  auto y = mul(x, x);
  EXPECT_FALSE(y.requires_grad());
  EXPECT_TRUE(y.is_leaf());
}

TEST(OpGradients, ElementwiseAndReductions) {
  std::mt19937_64 rng(30);
  auto a = random_tensor({3, 4}, rng);
  auto b = random_tensor({3, 4}, rng);
  auto r = random_tensor({4}, rng);
  expect_gradcheck("add/sub/mul",
                   [&] { return probe(mul(add(a, b), sub(a, scale(b, 0.3))), 1); },
                   {a, b});
  expect_gradcheck("gelu", [&] { return probe(gelu(a), 2); }, {a});
  expect_gradcheck("sigmoid", [&] { return probe(sigmoid(a), 3); }, {a});
  expect_gradcheck("add_row", [&] { return probe(add_row(a, r), 4); }, {a, r});
  expect_gradcheck("mean_rows", [&] { return probe(mean_rows(a), 5); }, {a});
  expect_gradcheck("mean", [&] { return mean(mul(a, a)); }, {a});
}

TEST(OpGradients, LinearAlgebra) {
  std::mt19937_64 rng(31);
  auto a = random_tensor({3, 4}, rng);
  auto b = random_tensor({4, 5}, rng);
  auto c = random_tensor({6, 4}, rng);
  auto bias = random_tensor({5}, rng);
  expect_gradcheck("matmul", [&] { return probe(matmul(a, b), 1); }, {a, b});
  expect_gradcheck("matmul_nt", [&] { return probe(matmul_nt(a, c), 2); },
                   {a, c});
  expect_gradcheck("linear", [&] { return probe(linear(a, b, bias), 3); },
                   {a, b, bias});
  expect_gradcheck("transpose", [&] { return probe(transpose(a), 4); }, {a});
  expect_gradcheck("reshape",
                   [&] { return probe(reshape(a, {2, 6}), 5); }, {a});
  expect_gradcheck("concat_rows",
                   [&] { return probe(concat_rows({a, c}), 6); }, {a, c});
}

TEST(OpGradients, NormalizationAndSoftmax) {
  std::mt19937_64 rng(32);
  auto x = random_tensor({4, 6}, rng);
  auto g = random_tensor({6}, rng);
  auto b = random_tensor({6}, rng);
  expect_gradcheck("layer_norm",
                   [&] { return probe(layer_norm(x, g, b), 1); }, {x, g, b});
  expect_gradcheck("softmax_groups",
                   [&] { return probe(softmax_groups(x, 3), 2); }, {x});
}

TEST(OpGradients, EmbeddingAndResampling) {
  std::mt19937_64 rng(33);
  auto table = random_tensor({7, 3}, rng);
  expect_gradcheck("embedding",
                   [&] { return probe(embedding(table, {1, 4, 1, 6}), 1); },
                   {table});
  auto m = random_tensor({2, 3, 4}, rng);
  expect_gradcheck("resize_nearest",
                   [&] { return probe(resize_nearest(m, 6, 8), 2); }, {m});
  expect_gradcheck("resize_bilinear",
                   [&] { return probe(resize_bilinear(m, 7, 5), 3); }, {m});
}

TEST(OpGradients, BceWithLogits) {
  std::mt19937_64 rng(34);
  auto z = random_tensor({10}, rng, true, -4, 4);
  std::vector<double> t{0, 1, 0.5, 1, 0, 0.25, 1, 0, 1, 0.75};
  expect_gradcheck("bce_with_logits", [&] { return bce_with_logits(z, t); },
                   {z});
}

TEST(ResizeBilinear, SameSizeIsIdentity) {
  std::mt19937_64 rng(35);
  auto m = random_tensor({2, 3, 5}, rng, false);
  auto y = resize_bilinear(m, 3, 5);
  for (std::size_t i = 0; i < m.numel(); ++i)
    EXPECT_DOUBLE_EQ(y.data()[i], m.data()[i]);
}

TEST(AdamW, ZeroGradFreshStateOnlyDecays) {
  std::vector<Tensor> p{Tensor::from({2}, {1.0, -2.0})};
  AdamWState st;
  adamw_step(p, {{0.0, 0.0}}, st, 0.1, {0.9, 0.999, 1e-8, 0.05});
  EXPECT_DOUBLE_EQ(p[0].data()[0], 1.0 * (1 - 0.1 * 0.05));
  EXPECT_DOUBLE_EQ(p[0].data()[1], -2.0 * (1 - 0.1 * 0.05));
}

TEST(AdamW, NoDecayNoGradLeavesParams) {
  std::vector<Tensor> p{Tensor::from({2}, {1.0, -2.0})};
  AdamWState st;
  adamw_step(p, {{}}, st, 0.1, {0.9, 0.999, 1e-8, 0.0});
  EXPECT_EQ(p[0].data()[0], 1.0);
  EXPECT_EQ(p[0].data()[1], -2.0);
}

TEST(AdamW, OneStepHandEvaluated) {
  // m_hat = v_hat = 1, so p' = 1 - 0.1 / (1 + 1e-8).
  std::vector<Tensor> p{Tensor::from({1}, {1.0})};
  AdamWState st;
  adamw_step(p, {{1.0}}, st, 0.1, {0.9, 0.999, 1e-8, 0.0});
  EXPECT_NEAR(p[0].item(), 0.900000001, 1e-15);
}

TEST(AdamW, NonFiniteGradientRejected) {
  std::vector<Tensor> p{Tensor::from({2}, {1.0, 2.0})};
  AdamWState st;
  expect_error(ErrorKind::kNumeric, [&] {
    adamw_step(p, {{0.5, std::nan("")}}, st, 0.1, {});
  });
  EXPECT_EQ(p[0].data()[0], 1.0);
  EXPECT_EQ(st.step, 0);
}

TEST(PolyDecay, Values) {
  EXPECT_EQ(poly_decay_lr(0, 100, 1e-3, 0.9), 1e-3);
  EXPECT_EQ(poly_decay_lr(100, 100, 1e-3, 0.9), 0.0);
  EXPECT_NEAR(poly_decay_lr(50, 100, 1e-3, 0.9), 5.358867312681466e-4, 1e-18);
  EXPECT_EQ(poly_decay_lr(150, 100, 1e-3, 0.9), 0.0);
}

}  // namespace
}  // namespace omniseg::tensor
