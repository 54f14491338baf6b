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
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>

#include "common/error.hpp"
#include "objective/loss.hpp"
#include "omnimodel/model.hpp"
#include "synthref/text.hpp"
#include "tensorkit/gradcheck.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace omniseg::model {
namespace {

using omniseg::testing::random_tensor;
using tensor::LevelShape;

void expect_error(ErrorKind kind, const std::function<void()>& fn) {
  try {
    fn();
    ADD_FAILURE() << "expected an omniseg::Error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), kind) << e.what();
  }
}

void fill_param(ParamStore& store, const std::string& name, double value) {
  Tensor t = store.get(name);
  auto d = t.mutable_data();
  std::fill(d.begin(), d.end(), value);
}

void fill_prefix(ParamStore& store, const std::string& prefix, double value) {
  for (const auto& n : store.names_with_prefix(prefix)) fill_param(store, n, value);
}

void randomize(Tensor t, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> d(-scale, scale);
  for (double& v : t.mutable_data()) v = d(rng);
}

Tensor random_image(int size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return random_tensor({1, 3, size, size}, rng, false);
}

mask::BinaryMask square_mask(int size, int y0, int x0, int side) {
  mask::BinaryMask m(size, size);
  for (int y = y0; y < std::min(size, y0 + side); ++y)
    for (int x = x0; x < std::min(size, x0 + side); ++x) m.set(y, x);
  return m;
}

std::vector<int> tokens_for(const std::string& text) {
  return synth::Vocabulary::standard().encode(text, false);
}

void expect_same(const Tensor& a, const Tensor& b, double tol = 0.0) {
  ASSERT_EQ(a.shape(), b.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) {
    if (tol == 0.0) {
      ASSERT_EQ(a.data()[i], b.data()[i]) << "at " << i;
    } else {
      ASSERT_NEAR(a.data()[i], b.data()[i], tol) << "at " << i;
    }
  }
}

// Per-row layer normalization written out, eps 1e-5.
std::vector<double> normalize_rows(const std::vector<double>& in, int width,
                                   const std::vector<double>& gain,
                                   const std::vector<double>& shift) {
  std::vector<double> out(in.size());
  for (std::size_t r = 0; r < in.size() / width; ++r) {
    double mean = 0.0, var = 0.0;
    for (int k = 0; k < width; ++k) mean += in[r * width + k];
    mean /= width;
    for (int k = 0; k < width; ++k) var += (in[r * width + k] - mean) * (in[r * width + k] - mean);
    var /= width;
    for (int k = 0; k < width; ++k)
      out[r * width + k] = (in[r * width + k] - mean) / std::sqrt(var + 1e-5) * gain[k] + shift[k];
  }
  return out;
}

ModelConfig small_config(int input_size) {
  ModelConfig c = gradcheck_preset();
  c.input_size = input_size;
  return c;
}

// ---------------------------------------------------------------- encoders

TEST(EncodeImage, DeskStridesAndChannels) {
  const ModelConfig c = preset("desk");
  OmniSegNet net(c, 1);
  const auto f = net.encode_image(random_image(64, 2));
  ASSERT_EQ(f.maps.size(), 4u);
  const int sides[] = {16, 8, 4, 2};
  for (int i = 0; i < 4; ++i)
    EXPECT_EQ(f.maps[i].shape(), (tensor::Shape{1, c.backbone_channels[i], sides[i], sides[i]}));
}

TEST(EncodeImage, ZeroImageAndWeightsGiveZeroFeatures) {
  OmniSegNet net(preset("desk"), 3);
  fill_prefix(net.params(), "image_encoder.", 0.0);
  const auto f = net.encode_image(Tensor::zeros({1, 3, 64, 64}));
  for (const auto& m : f.maps)
    for (double v : m.data()) ASSERT_EQ(v, 0.0);
}

TEST(EncodeImage, WrongSizeIsRejected) {
  OmniSegNet net(preset("desk"), 4);
  expect_error(ErrorKind::kDimension, [&] { net.encode_image(Tensor::zeros({1, 3, 32, 32})); });
}

TEST(PixelEncode, EveryLevelHasModelWidth) {
  const ModelConfig c = preset("desk");
  OmniSegNet net(c, 5);
  const auto p = net.pixel_encode(net.encode_image(random_image(64, 6)));
  ASSERT_EQ(p.levels.size(), 4u);
  for (const auto& l : p.levels) {
    EXPECT_EQ(l.tokens.dim(0), l.height * l.width);
    EXPECT_EQ(l.tokens.dim(1), c.d_model);
  }
}

TEST(PixelEncode, IdentityProjectionsAndZeroTopDownPassFeaturesThrough) {
  ModelConfig c = small_config(32);
  c.backbone_channels = {c.d_model, c.d_model, c.d_model, c.d_model};
  OmniSegNet net(c, 7);
  for (int i = 0; i < 4; ++i) {
    const std::string lat = "pixel_encoder.lateral" + std::to_string(i);
    fill_param(net.params(), lat + ".weight", 0.0);
    fill_param(net.params(), lat + ".bias", 0.0);
    Tensor w = net.params().get(lat + ".weight");
    for (int k = 0; k < c.d_model; ++k) w.mutable_data()[k * c.d_model + k] = 1.0;
  }
  fill_prefix(net.params(), "pixel_encoder.topdown", 0.0);
  const auto raw = net.encode_image(random_image(32, 8));
  const auto p = net.pixel_encode(raw);
  const std::vector<double> ones(c.d_model, 1.0), zeros(c.d_model, 0.0);
  for (int i = 0; i < 4; ++i) {
    const Tensor tokens = map_to_tokens(raw.maps[i]);
    const auto expected = normalize_rows({tokens.data().begin(), tokens.data().end()}, c.d_model,
                                         ones, zeros);
    ASSERT_EQ(p.levels[i].tokens.numel(), expected.size());
    for (std::size_t k = 0; k < expected.size(); ++k)
      ASSERT_NEAR(p.levels[i].tokens.data()[k], expected[k], 1e-12);
  }
}

// Top-down fusion and output normalization recomputed with explicit loops.
TEST(PixelEncode, MatchesManualUpsampleAdd) {
  const ModelConfig c = small_config(32);
  OmniSegNet net(c, 9);
  std::mt19937_64 rng(10);
  for (const auto& n : net.params().names_with_prefix("pixel_encoder.")) randomize(net.params().get(n), rng, 0.5);
  const auto raw = net.encode_image(random_image(32, 11));
  const auto p = net.pixel_encode(raw);
  const int d = c.d_model;
  auto apply_linear = [&](const std::vector<double>& in, int rows, int cin,
                          const std::string& name) {
    const auto w = net.params().get(name + ".weight").data();
    const auto b = net.params().get(name + ".bias").data();
    std::vector<double> out(static_cast<std::size_t>(rows) * d);
    for (int r = 0; r < rows; ++r)
      for (int o = 0; o < d; ++o) {
        double s = b[o];
        for (int k = 0; k < cin; ++k) s += in[r * cin + k] * w[k * d + o];
        out[r * d + o] = s;
      }
    return out;
  };
  std::vector<std::vector<double>> expected(4);
  for (int i = 3; i >= 0; --i) {
    const Tensor& m = raw.maps[i];
    const int ch = m.dim(1), h = m.dim(2), w = m.dim(3);
    std::vector<double> tok(static_cast<std::size_t>(h) * w * ch);
    for (int cc = 0; cc < ch; ++cc)
      for (int t = 0; t < h * w; ++t) tok[t * ch + cc] = m.data()[cc * h * w + t];
    expected[i] = apply_linear(tok, h * w, ch, "pixel_encoder.lateral" + std::to_string(i));
    if (i < 3) {
      const int hc = raw.maps[i + 1].dim(2), wc = raw.maps[i + 1].dim(3);
      const auto top = apply_linear(expected[i + 1], hc * wc, d,
                                    "pixel_encoder.topdown" + std::to_string(i));
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const int sy = y * hc / h, sx = x * wc / w;
          for (int o = 0; o < d; ++o) expected[i][(y * w + x) * d + o] += top[(sy * wc + sx) * d + o];
        }
    }
  }
  for (int i = 0; i < 4; ++i) {
    const std::string norm = "pixel_encoder.norm" + std::to_string(i);
    const auto gain = net.params().get(norm + ".gamma").data();
    const auto shift = net.params().get(norm + ".beta").data();
    const auto normed = normalize_rows(expected[i], d, {gain.begin(), gain.end()},
                                       {shift.begin(), shift.end()});
    ASSERT_EQ(p.levels[i].tokens.numel(), normed.size());
    for (std::size_t k = 0; k < normed.size(); ++k)
      ASSERT_NEAR(p.levels[i].tokens.data()[k], normed[k], 1e-12);
  }
}

TEST(EncodeText, DeterministicAndFixedLength) {
  const ModelConfig c = preset("desk");
  OmniSegNet net(c, 12);
  const auto a = net.encode_text(tokens_for("the red circle"));
  const auto b = net.encode_text(tokens_for("the red circle"));
  EXPECT_EQ(a.shape(), (tensor::Shape{c.max_text_len, c.d_model}));
  expect_same(a, b);
  const auto longer = net.encode_text(tokens_for("all objects except the leftmost red circle"));
  EXPECT_EQ(longer.shape(), a.shape());
}

TEST(EncodeText, ValidMaskFlagsRealTokens) {
  OmniSegNet net(preset("desk"), 13);
  std::vector<std::uint8_t> valid;
  net.encode_text(tokens_for("the red circle"), &valid);
  ASSERT_EQ(valid.size(), 20u);
  for (int i = 0; i < 20; ++i) EXPECT_EQ(valid[i], i < 3 ? 1 : 0);
}

TEST(EncodeText, SwappingContentTokensChangesFeatures) {
  OmniSegNet net(preset("desk"), 14);
  auto t = tokens_for("the red circle and the blue square");
  auto swapped = t;
  std::swap(swapped[1], swapped[5]);
  const auto a = net.encode_text(t);
  const auto b = net.encode_text(swapped);
  double diff = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) diff += std::abs(a.data()[i] - b.data()[i]);
  EXPECT_GT(diff, 1e-3);
}

TEST(EncodeText, RejectsBadTokens) {
  const ModelConfig c = preset("desk");
  OmniSegNet net(c, 15);
  expect_error(ErrorKind::kInvalidArgument, [&] { net.encode_text({2, c.vocab_size}); });
  expect_error(ErrorKind::kInvalidArgument, [&] { net.encode_text({2, -1}); });
  expect_error(ErrorKind::kInvalidArgument, [&] { net.encode_text(std::vector<int>(21, 2)); });
  expect_error(ErrorKind::kUsage, [&] { net.encode_text({}); });
}

// --------------------------------------------------------------------- PEM

TEST(PemFuse, ZeroConvAndLevelEmbeddingLeaveReferenceTokens) {
  OmniSegNet net(preset("desk"), 16);
  fill_prefix(net.params(), "prompt_encoder.pem", 0.0);
  fill_param(net.params(), "prompt_encoder.level_embed", 0.0);
  const auto ref = net.pixel_encode(net.encode_image(random_image(64, 17)));
  const auto fused = net.pem_fuse(ref, square_mask(64, 10, 10, 20));
  std::vector<Tensor> parts;
  for (const auto& l : ref.levels) parts.push_back(l.tokens);
  expect_same(fused.tokens, tensor::concat_rows(parts));
}

TEST(PemFuse, EmptyPromptWithZeroBiasAddsNothingBeyondLevelEmbedding) {
  OmniSegNet net(preset("desk"), 18);
  fill_param(net.params(), "prompt_encoder.level_embed", 0.0);
  for (int i = 0; i < 4; ++i) fill_param(net.params(), "prompt_encoder.pem" + std::to_string(i) + ".bias", 0.0);
  const auto ref = net.pixel_encode(net.encode_image(random_image(64, 19)));
  const auto fused = net.pem_fuse(ref, mask::BinaryMask(64, 64));
  std::vector<Tensor> parts;
  for (const auto& l : ref.levels) parts.push_back(l.tokens);
  expect_same(fused.tokens, tensor::concat_rows(parts));
}

TEST(PemFuse, TokenCountIsSumOfLevelAreas) {
  OmniSegNet net(preset("desk"), 20);
  const auto ref = net.pixel_encode(net.encode_image(random_image(64, 21)));
  const auto fused = net.pem_fuse(ref, square_mask(64, 0, 0, 8));
  int expected = 0;
  for (const auto& l : ref.levels) expected += l.height * l.width;
  EXPECT_EQ(expected, 16 * 16 + 8 * 8 + 4 * 4 + 2 * 2);
  EXPECT_EQ(fused.tokens.dim(0), expected);
  ASSERT_EQ(fused.shapes.size(), 4u);
  int start = 0;
  for (int i = 0; i < 4; ++i) {
    EXPECT_EQ(fused.shapes[i].start, start);
    start += fused.shapes[i].height * fused.shapes[i].width;
  }
}

TEST(PemFuse, PromptSizeMismatchIsRejected) {
  OmniSegNet net(preset("desk"), 22);
  const auto ref = net.pixel_encode(net.encode_image(random_image(64, 23)));
  expect_error(ErrorKind::kDimension, [&] { net.pem_fuse(ref, mask::BinaryMask(32, 32)); });
}

// ------------------------------------------------------ deformable attention

using omniseg::testing::dense_deform;
using omniseg::testing::make_deform_case;

TEST(DeformableAttention, MatchesDenseOracleOn50Instances) {
  for (std::uint64_t s = 0; s < 50; ++s) {
    auto c = make_deform_case(1000 + s);
    const auto got = c->attn(c->query, c->reference, c->memory, c->shapes);
    const auto want = dense_deform(*c);
    ASSERT_EQ(got.numel(), want.size());
    for (std::size_t i = 0; i < want.size(); ++i)
      ASSERT_NEAR(got.data()[i], want[i], 1e-12) << "instance " << s << " entry " << i;
  }
}

TEST(DeformableAttention, ZeroOffsetsAndUniformWeightsAverageReferenceSamples) {
  auto c = make_deform_case(77);
  fill_prefix(c->store, "deform.offsets", 0.0);
  fill_prefix(c->store, "deform.weights", 0.0);
  const auto got = c->attn(c->query, c->reference, c->memory, c->shapes);
  // Per level: bilinear sample of the projected values at the reference point.
  const Tensor val = c->attn.value(c->memory);
  const int n = c->query.dim(0), d = c->d;
  std::vector<double> mean(static_cast<std::size_t>(n) * d, 0.0);
  for (const auto& sh : c->shapes) {
    std::vector<double> fm(static_cast<std::size_t>(d) * sh.height * sh.width);
    for (int t = 0; t < sh.height * sh.width; ++t)
      for (int ch = 0; ch < d; ++ch) fm[ch * sh.height * sh.width + t] = val.data()[(sh.start + t) * d + ch];
    const auto smp = tensor::bilinear_sample(Tensor::from({d, sh.height, sh.width}, fm), c->reference);
    for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += smp.data()[k] / c->shapes.size();
  }
  const auto want = c->attn.output(Tensor::from({n, d}, mean));
  expect_same(got, want, 1e-12);
}

TEST(DeformableAttention, ConstantMemoryGivesProjectedConstant) {
  auto c = make_deform_case(78);
  std::vector<double> row(c->d);
  std::mt19937_64 rng(79);
  for (double& v : row) v = std::uniform_real_distribution<double>(-1, 1)(rng);
  std::vector<double> mem;
  for (int t = 0; t < c->memory.dim(0); ++t) mem.insert(mem.end(), row.begin(), row.end());
  c->memory = Tensor::from({c->memory.dim(0), c->d}, mem);
  const auto got = c->attn(c->query, c->reference, c->memory, c->shapes);
  const auto one = c->attn.output(c->attn.value(Tensor::from({1, c->d}, row)));
  for (int i = 0; i < got.dim(0); ++i)
    for (int k = 0; k < c->d; ++k) ASSERT_NEAR(got.data()[i * c->d + k], one.data()[k], 1e-12);
}

TEST(DeformableAttention, NonFiniteOffsetsAreRejected) {
  auto c = make_deform_case(80);
  c->attn.offsets.bias.mutable_data()[0] = std::nan("");
  expect_error(ErrorKind::kNumeric, [&] { c->attn(c->query, c->reference, c->memory, c->shapes); });
}

// ------------------------------------------------ generator and decoder

TEST(PromptGenerate, ThreeLayersAndFixedLength) {
  const ModelConfig c = preset("desk");
  OmniSegNet net(c, 30);
  const auto ref = net.pixel_encode(net.encode_image(random_image(64, 31)));
  int layers = 0;
  const auto out = net.prompt_generate(net.pem_fuse(ref, square_mask(64, 5, 5, 12)), &layers);
  EXPECT_EQ(layers, 3);
  EXPECT_EQ(out.shape(), (tensor::Shape{20, c.d_model}));
}

TEST(MaskDecode, NineBlocksAndRegionFeatureShape) {
  const ModelConfig c = preset("desk");
  OmniSegNet net(c, 32);
  const auto target = net.pixel_encode(net.encode_image(random_image(64, 33)));
  std::vector<std::uint8_t> valid;
  const auto text = net.encode_text(tokens_for("the red circle"), &valid);
  int blocks = 0;
  const auto reg = net.mask_decode(net.seg_queries(), text, valid, target, &blocks);
  EXPECT_EQ(blocks, 9);
  EXPECT_EQ(reg.shape(), (tensor::Shape{16, c.d_model}));
}

TEST(MaskDecode, FullyMaskedPromptIsAnError) {
  OmniSegNet net(preset("desk"), 34);
  const auto target = net.pixel_encode(net.encode_image(random_image(64, 35)));
  const auto text = net.encode_text(tokens_for("the red circle"));
  expect_error(ErrorKind::kUsage, [&] {
    net.mask_decode(net.seg_queries(), text, std::vector<std::uint8_t>(20, 0), target);
  });
}

TEST(MaskDecode, PaddedPromptRowsDoNotMatter) {
  OmniSegNet net(preset("desk"), 36);
  const auto target = net.pixel_encode(net.encode_image(random_image(64, 37)));
  std::vector<std::uint8_t> valid;
  const auto text = net.encode_text(tokens_for("the red circle"), &valid);
  std::vector<double> altered(text.data().begin(), text.data().end());
  for (std::size_t i = 3 * 64; i < altered.size(); ++i) altered[i] = 100.0 + static_cast<double>(i);
  const auto a = net.mask_decode(net.seg_queries(), text, valid, target);
  const auto b = net.mask_decode(net.seg_queries(), Tensor::from(text.shape(), altered), valid, target);
  expect_same(a, b);
}

TEST(Attention, PaddedKeysReceiveZeroWeight) {
  ParamStore store;
  std::mt19937_64 rng(38);
  LayerFactory f(store, rng);
  const Attention attn = f.attention("attn", 16, 4);
  const auto q = random_tensor({5, 16}, rng, false);
  const auto kv = random_tensor({7, 16}, rng, false);
  const std::vector<std::uint8_t> valid = {1, 1, 0, 1, 0, 0, 1};
  std::vector<double> weights;
  attn(q, kv, kv, valid, &weights);
  ASSERT_EQ(weights.size(), 4u * 5 * 7);
  for (std::size_t i = 0; i < weights.size(); ++i)
    if (!valid[i % 7]) EXPECT_EQ(weights[i], 0.0);
}

TEST(MaskDecode, PermutingQueriesPermutesRegionFeatures) {
  const ModelConfig c = preset("desk");
  OmniSegNet net(c, 39);
  const auto target = net.pixel_encode(net.encode_image(random_image(64, 40)));
  std::vector<std::uint8_t> valid;
  const auto text = net.encode_text(tokens_for("the blue square"), &valid);
  const Tensor& q = net.seg_queries();
  std::vector<int> perm(16);
  for (int i = 0; i < 16; ++i) perm[i] = (i * 5 + 3) % 16;
  std::vector<double> pq(q.numel());
  for (int i = 0; i < 16; ++i)
    std::copy_n(q.data().begin() + perm[i] * c.d_model, c.d_model, pq.begin() + i * c.d_model);
  const auto a = net.mask_decode(q, text, valid, target);
  const auto b = net.mask_decode(Tensor::from(q.shape(), pq), text, valid, target);
  for (int i = 0; i < 16; ++i)
    for (int k = 0; k < c.d_model; ++k)
      ASSERT_NEAR(b.data()[i * c.d_model + k], a.data()[perm[i] * c.d_model + k], 1e-10);
}

// ------------------------------------------------------------------ heads

TEST(MaskHead, ZeroProjectionGivesBiasEverywhere) {
  const ModelConfig c = preset("desk");
  OmniSegNet net(c, 41);
  fill_prefix(net.params(), "mask_head.query_embed1", 0.0);
  const auto target = net.pixel_encode(net.encode_image(random_image(64, 42)));
  std::mt19937_64 rng(43);
  const auto h = net.mask_head(random_tensor({16, c.d_model}, rng, false), target);
  const double bias = net.params().get("mask_head.bias").item();
  EXPECT_EQ(h.mask_logits.shape(), (tensor::Shape{64, 64}));
  for (double v : h.mask_logits.data()) ASSERT_NEAR(v, bias, 1e-15);
  EXPECT_EQ(h.region_logits.shape(), (tensor::Shape{16}));
}

TEST(ExistenceHead, ZeroInitGivesOneHalf) {
  const ModelConfig c = preset("desk");
  OmniSegNet net(c, 44);
  fill_prefix(net.params(), "existence_head.", 0.0);
  std::mt19937_64 rng(45);
  const auto logit = net.existence_logit(random_tensor({16, c.d_model}, rng, false));
  EXPECT_EQ(logit.item(), 0.0);
  EXPECT_EQ(1.0 / (1.0 + std::exp(-logit.item())), 0.5);
}

TEST(ExistenceHead, MonotoneInOutputBiasAndFlipsDecision) {
  OmniSegNet net(preset("desk"), 46);
  fill_prefix(net.params(), "existence_head.", 0.0);
  PromptSet ps;
  ps.text_tokens = tokens_for("the red circle");
  const auto img = random_image(64, 47);
  double prev = 0.0;
  for (double b : {-2.0, -0.01, 0.0, 0.01, 2.0}) {
    fill_param(net.params(), "existence_head.out.bias", b);
    const auto out = net.forward(img, ps);
    const double p = out.sources[0].exist_prob;
    EXPECT_GT(p, prev);
    EXPECT_EQ(out.exists, b >= 0.0);
    prev = p;
  }
}

// ------------------------------------------------------------- forward

TEST(Forward, PromptCountRule) {
  OmniSegNet net(preset("desk"), 48);
  const auto img = random_image(64, 49);
  PromptSet text;
  text.text_tokens = tokens_for("the red circle");
  PromptSet visual;
  visual.visual = VisualInput{random_image(64, 50), square_mask(64, 4, 4, 10)};
  PromptSet omni = text;
  omni.visual = visual.visual;

  const auto t = net.forward(img, text);
  ASSERT_EQ(t.sources.size(), 1u);
  EXPECT_EQ(t.sources[0].source, synth::Source::kText);
  const auto v = net.forward(img, visual);
  ASSERT_EQ(v.sources.size(), 1u);
  EXPECT_EQ(v.sources[0].source, synth::Source::kVisual);
  EXPECT_EQ(v.sources[0].prompt_generator_layers_run, 3);
  const auto o = net.forward(img, omni);
  ASSERT_EQ(o.sources.size(), 2u);
  EXPECT_EQ(o.sources[0].source, synth::Source::kText);
  EXPECT_EQ(o.sources[1].source, synth::Source::kVisual);
  for (const auto& s : o.sources) {
    EXPECT_EQ(s.mask_logits.shape(), (tensor::Shape{64, 64}));
    EXPECT_EQ(s.decoder_blocks_run, 9);
  }
  // The text branch does not depend on the visual prompt.
  expect_same(o.sources[0].mask_logits, t.sources[0].mask_logits);
}

TEST(Forward, EmptyPromptSetIsUsageError) {
  OmniSegNet net(preset("desk"), 51);
  try {
    net.forward(random_image(64, 52), PromptSet{});
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kUsage);
    EXPECT_STREQ(e.what(), "at least one prompt required");
  }
}

TEST(Forward, SameSeedSameParameters) {
  OmniSegNet a(preset("desk"), 53), b(preset("desk"), 53), c(preset("desk"), 54);
  EXPECT_EQ(a.params().hash(), b.params().hash());
  EXPECT_NE(a.params().hash(), c.params().hash());
}

TEST(Checkpoint, SaveLoadForwardIsBitIdentical) {
  const auto dir = std::filesystem::temp_directory_path() / "omniseg_model_ckpt";
  std::filesystem::create_directories(dir);
  OmniSegNet net(preset("desk"), 55);
  std::mt19937_64 rng(56);
  randomize(net.params().get("mask_head.bias"), rng);
  net.save(dir / "m.ckpt");
  const OmniSegNet back = OmniSegNet::load(dir / "m.ckpt");
  EXPECT_EQ(back.params().hash(), net.params().hash());
  PromptSet ps;
  ps.text_tokens = tokens_for("the green triangle");
  ps.visual = VisualInput{random_image(64, 57), square_mask(64, 20, 20, 9)};
  const auto img = random_image(64, 58);
  const auto a = net.forward(img, ps);
  const auto b = back.forward(img, ps);
  ASSERT_EQ(a.sources.size(), b.sources.size());
  for (std::size_t k = 0; k < a.sources.size(); ++k) {
    expect_same(a.sources[k].mask_logits, b.sources[k].mask_logits);
    EXPECT_EQ(a.sources[k].exist_prob, b.sources[k].exist_prob);
  }
  std::filesystem::remove_all(dir);
}

TEST(Checkpoint, CorruptFilesAreRejected) {
  const auto dir = std::filesystem::temp_directory_path() / "omniseg_model_bad";
  std::filesystem::create_directories(dir);
  {
    std::ofstream f(dir / "bad.ckpt", std::ios::binary);
    f << "NOTACKPT";
  }
  expect_error(ErrorKind::kFormat, [&] { OmniSegNet::load(dir / "bad.ckpt"); });
  OmniSegNet net(small_config(8), 59);
  net.save(dir / "good.ckpt");
  std::filesystem::resize_file(dir / "good.ckpt", std::filesystem::file_size(dir / "good.ckpt") / 2);
  expect_error(ErrorKind::kFormat, [&] { OmniSegNet::load(dir / "good.ckpt"); });
  expect_error(ErrorKind::kNotFound, [&] { OmniSegNet::load(dir / "missing.ckpt"); });
  std::filesystem::remove_all(dir);
}

// ---------------------------------------------------- gradient checks

TEST(GradCheck, FullModelWithLossAtReducedSize) {
  const ModelConfig c = gradcheck_preset();
  OmniSegNet net(c, 60);
  // Move every parameter off its structured init so no gradient is trivially zero.
  std::mt19937_64 rng(61);
  for (const auto& n : net.params().names()) {
    Tensor t = net.params().get(n);
    std::normal_distribution<double> d(0.0, 0.02);
    for (double& v : t.mutable_data()) v += d(rng);
  }
  Tensor image = random_tensor({1, 3, 8, 8}, rng, true);
  Tensor reference = random_tensor({1, 3, 8, 8}, rng, true);
  PromptSet ps;
  ps.text_tokens = tokens_for("the red circle and the blue square");
  ps.visual = VisualInput{reference, square_mask(8, 2, 1, 4)};
  const std::vector<mask::BinaryMask> targets = {square_mask(8, 1, 1, 3), square_mask(8, 4, 3, 4)};
  auto loss = [&] {
    const auto out = net.forward(image, ps);
    return objective::sample_loss(out, targets, true, c.seg_query_grid, {}).total;
  };
  std::vector<Tensor> inputs = net.params().tensors();
  inputs.push_back(image);
  inputs.push_back(reference);
  tensor::GradCheckOptions opt;
  opt.max_entries_per_input = 3;
  opt.seed = 62;
  const auto r = tensor::check_gradients("omniseg", loss, inputs, opt);
  EXPECT_TRUE(r.passed) << "max rel error " << r.max_rel_error;
  EXPECT_GT(r.entries_checked, 300u);
}

}  // namespace
}  // namespace omniseg::model
