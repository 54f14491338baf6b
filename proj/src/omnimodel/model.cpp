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

#include "omnimodel/model.hpp"

#include <cmath>

#include "common/error.hpp"

namespace omniseg::model {

using namespace omniseg::tensor;

namespace {

std::string at(const std::string& base, int i) { return base + std::to_string(i); }

double logit(double p) { return std::log(p / (1.0 - p)); }

// Foreground rate the mask bias starts from.
constexpr double kPriorForeground = 0.1;

}  // namespace

OmniSegNet::OmniSegNet(const ModelConfig& config, std::uint64_t seed)
    : config_(config) {
  config_.validate();
  std::mt19937_64 rng(seed);
  LayerFactory f(params_, rng);
  const int d = config_.d_model, heads = config_.heads;
  const auto& ch = config_.backbone_channels;

  stem_.push_back(f.conv("image_encoder.stem0", 3, ch[0], 3, 2, 1));
  stem_.push_back(f.conv("image_encoder.stem1", ch[0], ch[0], 3, 2, 1));
  for (int i = 0; i < config_.n_scales; ++i) {
    if (i > 0) down_.push_back(f.conv(at("image_encoder.down", i), ch[i - 1], ch[i], 3, 2, 1));
    refine_.push_back(f.conv(at("image_encoder.refine", i), ch[i], ch[i], 3, 1, 1));
  }

  for (int i = 0; i < config_.n_scales; ++i)
    lateral_.push_back(f.linear(at("pixel_encoder.lateral", i), ch[i], d));
  for (int i = 0; i + 1 < config_.n_scales; ++i)
    topdown_.push_back(f.linear(at("pixel_encoder.topdown", i), d, d));
  for (int i = 0; i < config_.n_scales; ++i)
    pyramid_norm_.push_back(f.layer_norm(at("pixel_encoder.norm", i), d));

  token_table_ = f.tensor("text_encoder.embedding", {config_.vocab_size, d},
                          normal_values(static_cast<std::size_t>(config_.vocab_size) * d, 0.5, rng));
  text_positions_ = f.tensor("text_encoder.position", {config_.max_text_len, d},
                             normal_values(static_cast<std::size_t>(config_.max_text_len) * d, 0.1, rng));
  for (int j = 0; j < config_.text_layers; ++j) {
    const std::string p = at("text_encoder.layer", j);
    text_layers_.push_back({f.layer_norm(p + ".norm_attn", d), f.layer_norm(p + ".norm_ffn", d),
                            f.attention(p + ".attn", d, heads),
                            f.feed_forward(p + ".ffn", d, config_.ffn_dim())});
  }
  text_norm_ = f.layer_norm("text_encoder.norm", d);

  for (int i = 0; i < config_.n_scales; ++i)
    pem_convs_.push_back(f.conv(at("prompt_encoder.pem", i), 1, d, 3, 1, 1));
  level_embed_ = f.tensor("prompt_encoder.level_embed", {config_.n_scales, d},
                          normal_values(static_cast<std::size_t>(config_.n_scales) * d, 0.1, rng));
  const int nq = config_.prompt_query_len;
  prompt_queries_ = f.tensor("prompt_encoder.queries", {nq, d},
                             normal_values(static_cast<std::size_t>(nq) * d, 0.5, rng));
  {
    // Reference points start on a near-square grid over the frame.
    const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(nq))));
    const int rows = (nq + cols - 1) / cols;
    std::vector<double> ref(2 * static_cast<std::size_t>(nq));
    for (int q = 0; q < nq; ++q) {
      ref[2 * q] = logit((q % cols + 0.5) / cols);
      ref[2 * q + 1] = logit((q / cols + 0.5) / rows);
    }
    reference_logits_ = f.tensor("prompt_encoder.reference_points", {nq, 2}, std::move(ref));
  }
  for (int j = 0; j < config_.prompt_generator_layers; ++j) {
    const std::string p = at("prompt_encoder.layer", j);
    GeneratorLayer g;
    g.norm_cross = f.layer_norm(p + ".norm_cross", d);
    g.cross = f.deformable(p + ".cross", d, heads, config_.n_scales, config_.deformable_points);
    g.norm_self = f.layer_norm(p + ".norm_self", d);
    g.self_attn = f.attention(p + ".self", d, heads);
    g.norm_ffn = f.layer_norm(p + ".norm_ffn", d);
    g.ffn = f.feed_forward(p + ".ffn", d, config_.ffn_dim());
    generator_.push_back(std::move(g));
  }
  generator_norm_ = f.layer_norm("prompt_encoder.norm", d);

  const int grid = config_.seg_query_grid;
  {
    const Tensor pos = sine_positions(grid, grid, d);
    seg_queries_ = f.tensor("mask_decoder.queries", {grid * grid, d},
                            std::vector<double>(pos.data().begin(), pos.data().end()));
  }
  for (int b = 0; b < config_.decoder_blocks; ++b) {
    const std::string p = at("mask_decoder.block", b);
    DecoderBlock blk;
    blk.norm_image = f.layer_norm(p + ".norm_image", d);
    blk.image_attn = f.attention(p + ".image_attn", d, heads);
    blk.norm_prompt = f.layer_norm(p + ".norm_prompt", d);
    blk.prompt_attn = f.attention(p + ".prompt_attn", d, heads);
    blk.norm_self = f.layer_norm(p + ".norm_self", d);
    blk.self_attn = f.attention(p + ".self_attn", d, heads);
    blk.norm_ffn = f.layer_norm(p + ".norm_ffn", d);
    blk.ffn = f.feed_forward(p + ".ffn", d, config_.ffn_dim());
    decoder_.push_back(std::move(blk));
  }
  decoder_norm_ = f.layer_norm("mask_decoder.norm", d);

  query_embed_a_ = f.linear("mask_head.query_embed0", d, d);
  query_embed_b_ = f.linear("mask_head.query_embed1", d, d);
  pixel_embed_ = f.linear("mask_head.pixel_embed", d, d);
  region_score_ = f.linear("mask_head.region_score", d, 1);
  mask_bias_ = f.tensor("mask_head.bias", {1}, {logit(kPriorForeground)});

  exist_a_ = f.linear("existence_head.hidden", d, d);
  exist_b_ = f.linear("existence_head.out", d, 1);
}

void OmniSegNet::check_image(const Tensor& image) const {
  const int s = config_.input_size;
  require(image.rank() == 4 && image.dim(0) == 1 && image.dim(1) == 3 &&
              image.dim(2) == s && image.dim(3) == s,
          ErrorKind::kDimension,
          "image must be [1,3," + std::to_string(s) + "," + std::to_string(s) +
              "], got " + shape_str(image.shape()));
}

BackboneFeatures OmniSegNet::encode_image(const Tensor& image) const {
  check_image(image);
  BackboneFeatures out;
  Tensor x = gelu(stem_[1](gelu(stem_[0](image))));
  for (int i = 0; i < config_.n_scales; ++i) {
    if (i > 0) x = gelu(down_[i - 1](x));
    x = add(x, gelu(refine_[i](x)));
    out.maps.push_back(x);
  }
  return out;
}

Pyramid OmniSegNet::pixel_encode(const BackboneFeatures& raw) const {
  require(static_cast<int>(raw.maps.size()) == config_.n_scales, ErrorKind::kDimension,
          "pixel encoder expects one map per scale");
  const int n = config_.n_scales;
  Pyramid p;
  p.levels.resize(n);
  std::vector<Tensor> fused(n);
  for (int i = n - 1; i >= 0; --i) {
    const Tensor& m = raw.maps[i];
    PyramidLevel& lvl = p.levels[i];
    lvl.height = m.dim(2);
    lvl.width = m.dim(3);
    fused[i] = lateral_[i](map_to_tokens(m));
    if (i + 1 < n) {
      const PyramidLevel& coarse = p.levels[i + 1];
      const Tensor down = tokens_to_map(topdown_[i](fused[i + 1]), coarse.height, coarse.width);
      fused[i] = add(fused[i], map_to_tokens(resize_nearest(down, lvl.height, lvl.width)));
    }
  }
  for (int i = 0; i < n; ++i) p.levels[i].tokens = pyramid_norm_[i](fused[i]);
  return p;
}

Tensor OmniSegNet::encode_text(const std::vector<int>& tokens,
                               std::vector<std::uint8_t>* valid) const {
  const int len = config_.max_text_len;
  require(static_cast<int>(tokens.size()) <= len, ErrorKind::kInvalidArgument,
          "text longer than " + std::to_string(len) + " tokens");
  std::vector<int> ids(tokens);
  ids.resize(len, synth::Vocabulary::kPad);
  std::vector<std::uint8_t> mask(len, 0);
  bool any = false;
  for (int i = 0; i < len; ++i) {
    require(ids[i] >= 0 && ids[i] < config_.vocab_size, ErrorKind::kInvalidArgument,
            "token id out of vocabulary: " + std::to_string(ids[i]));
    mask[i] = ids[i] != synth::Vocabulary::kPad;
    any |= mask[i] != 0;
  }
  require(any, ErrorKind::kUsage, "text prompt has no tokens");
  Tensor x = add(embedding(token_table_, ids), text_positions_);
  for (const auto& layer : text_layers_) {
    const Tensor h = layer.norm_attn(x);
    x = add(x, layer.attn(h, h, h, mask));
    x = add(x, layer.ffn(layer.norm_ffn(x)));
  }
  if (valid) *valid = mask;
  return text_norm_(x);
}

FusedReference OmniSegNet::pem_fuse(const Pyramid& reference,
                                    const mask::BinaryMask& prompt) const {
  require(static_cast<int>(reference.levels.size()) == config_.n_scales,
          ErrorKind::kDimension, "reference pyramid must have every scale");
  require(prompt.height() == config_.input_size && prompt.width() == config_.input_size,
          ErrorKind::kDimension, "prompt size must match the reference image");
  FusedReference out;
  std::vector<Tensor> parts;
  int start = 0;
  for (int i = 0; i < config_.n_scales; ++i) {
    const PyramidLevel& lvl = reference.levels[i];
    const auto soft = mask::resize_soft(prompt, lvl.height, lvl.width);
    const Tensor p = Tensor::from({1, 1, lvl.height, lvl.width}, soft.values);
    Tensor t = add(lvl.tokens, map_to_tokens(pem_convs_[i](p)));
    t = add_row(t, embedding(level_embed_, {i}));
    parts.push_back(t);
    out.shapes.push_back({lvl.height, lvl.width, start});
    start += lvl.height * lvl.width;
  }
  out.tokens = concat_rows(parts);
  int r0 = prompt.height(), c0 = prompt.width(), r1 = -1, c1 = -1;
  for (int r = 0; r < prompt.height(); ++r)
    for (int c = 0; c < prompt.width(); ++c)
      if (prompt.at(r, c)) {
        r0 = std::min(r0, r);
        c0 = std::min(c0, c);
        r1 = std::max(r1, r);
        c1 = std::max(c1, c);
      }
  if (r1 >= 0) {
    const double w = prompt.width(), h = prompt.height();
    out.prompt_box = {c0 / w, r0 / h, (c1 + 1) / w, (r1 + 1) / h};
  }
  return out;
}

Tensor OmniSegNet::prompt_generate(const FusedReference& reference, int* layers_run) const {
  Tensor q = prompt_queries_;
  const int n = config_.prompt_query_len;
  const auto& box = reference.prompt_box;
  std::vector<double> lo(static_cast<std::size_t>(n) * 2), extent(lo.size());
  for (int i = 0; i < n; ++i) {
    lo[2 * i] = box[0];
    lo[2 * i + 1] = box[1];
    extent[2 * i] = box[2] - box[0];
    extent[2 * i + 1] = box[3] - box[1];
  }
  const Tensor ref = add(mul(sigmoid(reference_logits_), Tensor::from({n, 2}, extent)),
                         Tensor::from({n, 2}, lo));
  const std::vector<std::uint8_t> all(config_.prompt_query_len, 1);
  int count = 0;
  for (const auto& g : generator_) {
    q = add(q, g.cross(g.norm_cross(q), ref, reference.tokens, reference.shapes));
    const Tensor h = g.norm_self(q);
    q = add(q, g.self_attn(h, h, h, all));
    q = add(q, g.ffn(g.norm_ffn(q)));
    ++count;
  }
  if (layers_run) *layers_run = count;
  return generator_norm_(q);
}

Tensor OmniSegNet::mask_decode(const Tensor& queries, const Tensor& prompt,
                               const std::vector<std::uint8_t>& prompt_valid,
                               const Pyramid& target, int* blocks_run) const {
  require(static_cast<int>(target.levels.size()) == config_.n_scales,
          ErrorKind::kDimension, "target pyramid must have every scale");
  bool any = false;
  for (auto v : prompt_valid) any |= v != 0;
  require(any, ErrorKind::kUsage, "at least one prompt required");
  const int d = config_.d_model;
  const int per_group = config_.decoder_blocks / config_.decoder_groups;
  std::vector<Tensor> keys;
  std::vector<std::vector<std::uint8_t>> valid;
  for (int g = 0; g < config_.decoder_groups; ++g) {
    const PyramidLevel& lvl = target.levels[g + 1];
    keys.push_back(add(lvl.tokens, sine_positions(lvl.height, lvl.width, d)));
    valid.emplace_back(static_cast<std::size_t>(lvl.height) * lvl.width, 1);
  }
  const std::vector<std::uint8_t> all(queries.dim(0), 1);
  Tensor x = queries;
  int count = 0;
  for (int b = 0; b < config_.decoder_blocks; ++b) {
    const int g = b / per_group;
    const auto& blk = decoder_[b];
    x = add(x, blk.image_attn(blk.norm_image(x), keys[g], target.levels[g + 1].tokens, valid[g]));
    x = add(x, blk.prompt_attn(blk.norm_prompt(x), prompt, prompt, prompt_valid));
    const Tensor h = blk.norm_self(x);
    x = add(x, blk.self_attn(h, h, h, all));
    x = add(x, blk.ffn(blk.norm_ffn(x)));
    ++count;
  }
  if (blocks_run) *blocks_run = count;
  return decoder_norm_(x);
}

HeadOutput OmniSegNet::mask_head(const Tensor& region_features, const Pyramid& target) const {
  const PyramidLevel& fine = target.levels[0];
  const int s = config_.input_size;
  const int q = region_features.dim(0);
  const Tensor qe = query_embed_b_(gelu(query_embed_a_(region_features)));
  const Tensor pe = pixel_embed_(fine.tokens);
  const Tensor per_query =
      scale(matmul_nt(qe, pe), 1.0 / std::sqrt(static_cast<double>(config_.d_model)));
  const Tensor scores = region_score_(region_features);  // [Q, 1]
  Tensor fused = matmul(transpose(sigmoid(scores)), per_query);  // [1, HW]
  fused = add_row(transpose(fused), mask_bias_);                 // [HW, 1]
  const Tensor map = reshape(fused, {1, fine.height, fine.width});
  HeadOutput out;
  out.mask_logits = reshape(resize_bilinear(map, s, s), {s, s});
  out.region_logits = reshape(scores, {q});
  return out;
}

Tensor OmniSegNet::existence_logit(const Tensor& region_features) const {
  return exist_b_(gelu(exist_a_(mean_rows(region_features))));
}

ForwardOutput OmniSegNet::forward(const Tensor& image, const PromptSet& prompts) const {
  require(prompts.text_tokens.has_value() || prompts.visual.has_value(),
          ErrorKind::kUsage, "at least one prompt required");
  const Pyramid target = pixel_encode(encode_image(image));
  ForwardOutput out;
  auto finish = [&](SourceOutput so, const Tensor& prompt,
                    const std::vector<std::uint8_t>& valid) {
    so.region_features = mask_decode(seg_queries_, prompt, valid, target, &so.decoder_blocks_run);
    HeadOutput h = mask_head(so.region_features, target);
    so.mask_logits = h.mask_logits;
    so.region_logits = h.region_logits;
    so.exist_logit = existence_logit(so.region_features);
    so.exist_prob = 1.0 / (1.0 + std::exp(-so.exist_logit.item()));
    out.exists |= so.exist_prob >= 0.5;
    out.sources.push_back(std::move(so));
  };
  if (prompts.text_tokens) {
    std::vector<std::uint8_t> valid;
    const Tensor text = encode_text(*prompts.text_tokens, &valid);
    SourceOutput so;
    so.source = synth::Source::kText;
    finish(std::move(so), text, valid);
  }
  if (prompts.visual) {
    check_image(prompts.visual->reference_image);
    const Pyramid ref = pixel_encode(encode_image(prompts.visual->reference_image));
    SourceOutput so;
    so.source = synth::Source::kVisual;
    const Tensor embedded =
        prompt_generate(pem_fuse(ref, prompts.visual->prompt), &so.prompt_generator_layers_run);
    finish(std::move(so), embedded,
           std::vector<std::uint8_t>(config_.prompt_query_len, 1));
  }
  return out;
}

void OmniSegNet::save(const std::filesystem::path& path) const {
  write_checkpoint(path, config_to_json(config_), params_);
}

OmniSegNet OmniSegNet::load(const std::filesystem::path& path) {
  const CheckpointContents c = read_checkpoint(path);
  OmniSegNet net(config_from_json(c.config), 0);
  const auto& names = net.params_.names();
  require(c.names == names, ErrorKind::kFormat,
          "checkpoint parameter table does not match its config");
  for (std::size_t i = 0; i < names.size(); ++i) {
    Tensor t = net.params_.tensors()[i];
    require(c.shapes[i] == t.shape(), ErrorKind::kFormat, "shape mismatch for " + names[i]);
    auto dst = t.mutable_data();
    std::copy(c.values[i].begin(), c.values[i].end(), dst.begin());
  }
  return net;
}

mask::BinaryMask mask_from_logits(const Tensor& logits) {
  require(logits.rank() == 2, ErrorKind::kDimension, "mask logits must be [height, width]");
  const int h = logits.dim(0), w = logits.dim(1);
  mask::BinaryMask m(h, w);
  const auto v = logits.data();
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) m.set(y, x, v[static_cast<std::size_t>(y) * w + x] > 0.0);
  return m;
}

Tensor image_to_input(const synth::RgbImage& image) {
  const int h = image.height, w = image.width;
  require(image.rgb.size() == static_cast<std::size_t>(h) * w * 3, ErrorKind::kDimension,
          "image buffer does not match its extent");
  std::vector<double> v(static_cast<std::size_t>(3) * h * w);
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < h * w; ++i)
      v[static_cast<std::size_t>(c) * h * w + i] =
          (image.rgb[static_cast<std::size_t>(i) * 3 + c] / 255.0 - 0.5) / 0.25;
  return Tensor::from({1, 3, h, w}, std::move(v));
}

}  // namespace omniseg::model
