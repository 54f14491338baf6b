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

#include "omnimodel/gradient_suite.hpp"

#include <chrono>
#include <functional>
#include <random>
#include <string>

#include "objective/loss.hpp"
#include "omnimodel/model.hpp"
#include "synthref/text.hpp"
#include "tensorkit/ops.hpp"

namespace omniseg::model {
namespace {

using namespace omniseg::tensor;

Tensor random_input(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::size_t n = 1;
  for (int e : shape) n *= static_cast<std::size_t>(e);
  std::vector<double> v(n);
  for (double& x : v) x = dist(rng);
  return Tensor::from(std::move(shape), std::move(v), true);
}

// Weighted sum with fixed random weights, so each output entry gets a
// distinct upstream gradient.
Tensor probe(const Tensor& y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> w(y.numel());
  for (double& x : w) x = dist(rng);
  return sum(mul(y, Tensor::from(y.shape(), std::move(w))));
}

mask::BinaryMask block_mask(int size, int y0, int x0, int side) {
  mask::BinaryMask m(size, size);
  for (int y = y0; y < std::min(size, y0 + side); ++y)
    for (int x = x0; x < std::min(size, x0 + side); ++x) m.set(y, x);
  return m;
}

struct Case {
  std::string name;
  std::function<GradCheckResult(std::mt19937_64&, const GradCheckOptions&)> run;
};

template <typename Fn>
Case op_case(std::string name, std::vector<Shape> shapes, Fn fn) {
  return {name, [name, shapes, fn](std::mt19937_64& rng, const GradCheckOptions& opt) {
            std::vector<Tensor> in;
            for (const auto& s : shapes) in.push_back(random_input(s, rng));
            const std::uint64_t probe_seed = rng();
            return check_gradients(
                name, [&] { return probe(fn(in), probe_seed); }, in, opt);
          }};
}

GradCheckResult full_model(std::mt19937_64& rng, const GradCheckOptions& base) {
  const ModelConfig c = gradcheck_preset();
  OmniSegNet net(c, rng());
  std::normal_distribution<double> jitter(0.0, 0.02);
  for (const auto& n : net.params().names()) {
    Tensor t = net.params().get(n);
    for (double& v : t.mutable_data()) v += jitter(rng);
  }
  Tensor image = random_input({1, 3, c.input_size, c.input_size}, rng);
  Tensor reference = random_input({1, 3, c.input_size, c.input_size}, rng);
  PromptSet prompts;
  prompts.text_tokens =
      synth::Vocabulary::standard().encode("the red circle and the blue square", false);
  prompts.visual = VisualInput{reference, block_mask(c.input_size, 2, 1, 4)};
  const std::vector<mask::BinaryMask> targets = {block_mask(c.input_size, 1, 1, 3),
                                                 block_mask(c.input_size, 4, 3, 4)};
  std::vector<Tensor> inputs = net.params().tensors();
  inputs.push_back(image);
  inputs.push_back(reference);
  GradCheckOptions opt = base;
  opt.max_entries_per_input = 3;
  opt.seed = rng();
  return check_gradients(
      "omniseg_net+loss",
      [&] {
        const auto out = net.forward(image, prompts);
        return objective::sample_loss(out, targets, true, c.seg_query_grid, {}).total;
      },
      inputs, opt);
}

std::vector<Case> cases() {
  std::vector<Case> out;
  out.push_back(op_case("add", {{3, 4}, {3, 4}}, [](auto& in) { return add(in[0], in[1]); }));
  out.push_back(op_case("sub", {{3, 4}, {3, 4}}, [](auto& in) { return sub(in[0], in[1]); }));
  out.push_back(op_case("mul", {{3, 4}, {3, 4}}, [](auto& in) { return mul(in[0], in[1]); }));
  out.push_back(op_case("scale", {{3, 4}}, [](auto& in) { return scale(in[0], -1.7); }));
  out.push_back(op_case("add_scalar", {{3, 4}}, [](auto& in) { return add_scalar(in[0], 0.3); }));
  out.push_back(op_case("gelu", {{3, 4}}, [](auto& in) { return gelu(in[0]); }));
  out.push_back(op_case("relu", {{3, 4}}, [](auto& in) { return relu(add_scalar(in[0], 0.05)); }));
  out.push_back(op_case("sigmoid", {{3, 4}}, [](auto& in) { return sigmoid(in[0]); }));
  out.push_back(op_case("add_row", {{3, 4}, {4}}, [](auto& in) { return add_row(in[0], in[1]); }));
  out.push_back(op_case("sum", {{3, 4}}, [](auto& in) { return sum(in[0]); }));
  out.push_back(op_case("mean", {{3, 4}}, [](auto& in) { return mean(in[0]); }));
  out.push_back(op_case("mean_rows", {{3, 4}}, [](auto& in) { return mean_rows(in[0]); }));
  out.push_back(op_case("matmul", {{3, 4}, {4, 5}}, [](auto& in) { return matmul(in[0], in[1]); }));
  out.push_back(op_case("matmul_nt", {{3, 4}, {5, 4}},
                        [](auto& in) { return matmul_nt(in[0], in[1]); }));
  out.push_back(op_case("linear", {{3, 4}, {4, 5}, {5}},
                        [](auto& in) { return linear(in[0], in[1], in[2]); }));
  out.push_back(op_case("transpose", {{3, 4}}, [](auto& in) { return transpose(in[0]); }));
  out.push_back(op_case("reshape", {{3, 4}}, [](auto& in) { return reshape(in[0], {2, 6}); }));
  out.push_back(op_case("concat_rows", {{2, 3}, {1, 3}},
                        [](auto& in) { return concat_rows({in[0], in[1]}); }));
  out.push_back(op_case("embedding", {{5, 3}},
                        [](auto& in) { return embedding(in[0], {4, 0, 4, 2}); }));
  out.push_back(op_case("layer_norm", {{3, 6}, {6}, {6}},
                        [](auto& in) { return layer_norm(in[0], in[1], in[2]); }));
  out.push_back(op_case("softmax_groups", {{3, 6}},
                        [](auto& in) { return softmax_groups(in[0], 3); }));
  out.push_back(op_case("attention_core", {{3, 4}, {5, 4}, {5, 4}}, [](auto& in) {
    return attention_core(in[0], in[1], in[2], 2, {1, 1, 0, 1, 1});
  }));
  out.push_back(op_case("conv2d", {{2, 2, 5, 4}, {3, 2, 3, 3}, {3}},
                        [](auto& in) { return conv2d(in[0], in[1], in[2], 2, 1); }));
  out.push_back(op_case("resize_nearest", {{2, 3, 3}},
                        [](auto& in) { return resize_nearest(in[0], 5, 4); }));
  out.push_back(op_case("resize_bilinear", {{2, 3, 3}},
                        [](auto& in) { return resize_bilinear(in[0], 5, 4); }));
  out.push_back({"bilinear_sample", [](std::mt19937_64& rng, const GradCheckOptions& opt) {
                   Tensor map = random_input({2, 4, 5}, rng);
                   Tensor pts = random_input({6, 2}, rng, 0.15, 0.85);
                   const std::uint64_t s = rng();
                   return check_gradients(
                       "bilinear_sample", [&] { return probe(bilinear_sample(map, pts), s); },
                       {map, pts}, opt);
                 }});
  out.push_back({"ms_deform_sample", [](std::mt19937_64& rng, const GradCheckOptions& opt) {
                   const int heads = 2, points = 2;
                   const std::vector<LevelShape> levels{{4, 3, 0}, {2, 2, 12}, {1, 1, 16}};
                   Tensor value = random_input({17, 6}, rng);
                   Tensor loc = random_input({3, heads * 3 * points * 2}, rng, 0.2, 0.8);
                   Tensor w = random_input({3, heads * 3 * points}, rng);
                   const std::uint64_t s = rng();
                   return check_gradients(
                       "ms_deform_sample",
                       [&] {
                         return probe(ms_deform_sample(value, levels, loc, w, heads, points), s);
                       },
                       {value, loc, w}, opt);
                 }});
  out.push_back({"bce_with_logits", [](std::mt19937_64& rng, const GradCheckOptions& opt) {
                   Tensor logits = random_input({4, 3}, rng, -3.0, 3.0);
                   std::uniform_real_distribution<double> u(0.0, 1.0);
                   std::vector<double> targets(12);
                   for (double& t : targets) t = u(rng);
                   return check_gradients(
                       "bce_with_logits", [&] { return bce_with_logits(logits, targets); },
                       {logits}, opt);
                 }});
  out.push_back({"omniseg_net+loss", full_model});
  return out;
}

}  // namespace

bool GradientSuiteReport::passed() const {
  if (results.empty()) return false;
  for (const auto& r : results)
    if (!r.passed) return false;
  return true;
}

GradientSuiteReport run_gradient_suite(std::uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();
  GradientSuiteReport report;
  std::mt19937_64 rng(seed);
  const GradCheckOptions opt;
  for (const auto& c : cases()) report.results.push_back(c.run(rng, opt));
  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

}  // namespace omniseg::model
