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

// The referring segmentation network: image and text encoders, pixel
// encoder, omni-prompt encoder (prompt embedding + prompt generator), mask
// decoder, mask head and existence head.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "maskgeo/mask.hpp"
#include "omnimodel/config.hpp"
#include "omnimodel/layers.hpp"
#include "omnimodel/params.hpp"
#include "synthref/image_io.hpp"
#include "synthref/sample.hpp"

namespace omniseg::model {

// Raw backbone maps, [1, C_i, H_i, W_i] at strides 4, 8, 16, 32.
struct BackboneFeatures {
  std::vector<Tensor> maps;
};

struct PyramidLevel {
  Tensor tokens;  // [height * width, d_model]
  int height = 0;
  int width = 0;
};

// levels[0] (stride 4) feeds the mask head; levels[1..3] feed the decoder.
struct Pyramid {
  std::vector<PyramidLevel> levels;
};

// Reference tokens of every scale, concatenated along the token axis.
struct FusedReference {
  Tensor tokens;  // [sum_i H_i * W_i, d_model]
  std::vector<tensor::LevelShape> shapes;
  // Normalised bounding box (x0, y0, x1, y1) of the prompt; the whole image
  // when the prompt is empty. Prompt-query reference points live inside it.
  std::array<double, 4> prompt_box = {0.0, 0.0, 1.0, 1.0};
};

struct VisualInput {
  Tensor reference_image;  // [1, 3, S, S]
  mask::BinaryMask prompt;  // S x S
};

struct PromptSet {
  std::optional<std::vector<int>> text_tokens;
  std::optional<VisualInput> visual;
};

struct HeadOutput {
  Tensor mask_logits;    // [S, S]
  Tensor region_logits;  // [Q]
};

struct SourceOutput {
  synth::Source source = synth::Source::kText;
  Tensor mask_logits;      // [S, S]
  Tensor region_logits;    // [Q], row-major over the query grid
  Tensor exist_logit;      // [1, 1]
  Tensor region_features;  // [Q, d_model]
  double exist_prob = 0.5;
  int prompt_generator_layers_run = 0;
  int decoder_blocks_run = 0;
};

struct ForwardOutput {
  std::vector<SourceOutput> sources;  // text first when both are present
  bool exists = false;                // OR over sources of exist_prob >= 0.5
};

class OmniSegNet {
 public:
  OmniSegNet(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  BackboneFeatures encode_image(const Tensor& image) const;
  Pyramid pixel_encode(const BackboneFeatures& raw) const;
  // Returns [max_text_len, d]; `valid` receives 1 for real tokens.
  Tensor encode_text(const std::vector<int>& tokens,
                     std::vector<std::uint8_t>* valid = nullptr) const;
  FusedReference pem_fuse(const Pyramid& reference, const mask::BinaryMask& prompt) const;
  Tensor prompt_generate(const FusedReference& reference, int* layers_run = nullptr) const;
  // queries[Q, d] -> region features [Q, d].
  Tensor mask_decode(const Tensor& queries, const Tensor& prompt,
                     const std::vector<std::uint8_t>& prompt_valid,
                     const Pyramid& target, int* blocks_run = nullptr) const;
  HeadOutput mask_head(const Tensor& region_features, const Pyramid& target) const;
  Tensor existence_logit(const Tensor& region_features) const;

  const Tensor& seg_queries() const { return seg_queries_; }

  ForwardOutput forward(const Tensor& image, const PromptSet& prompts) const;

  void save(const std::filesystem::path& path) const;
  static OmniSegNet load(const std::filesystem::path& path);

 private:
  struct TextLayer {
    LayerNorm norm_attn, norm_ffn;
    Attention attn;
    FeedForward ffn;
  };
  struct GeneratorLayer {
    LayerNorm norm_cross, norm_self, norm_ffn;
    DeformableAttention cross;
    Attention self_attn;
    FeedForward ffn;
  };
  struct DecoderBlock {
    LayerNorm norm_image, norm_prompt, norm_self, norm_ffn;
    Attention image_attn, prompt_attn, self_attn;
    FeedForward ffn;
  };

  void check_image(const Tensor& image) const;

  ModelConfig config_;
  ParamStore params_;

  std::vector<Conv> stem_;
  std::vector<Conv> down_;    // stages 1..3
  std::vector<Conv> refine_;  // one per scale

  std::vector<Linear> lateral_;  // backbone width -> d, per scale
  std::vector<Linear> topdown_;  // coarser level -> finer level, scales 0..2
  std::vector<LayerNorm> pyramid_norm_;

  Tensor token_table_, text_positions_;
  std::vector<TextLayer> text_layers_;
  LayerNorm text_norm_;

  std::vector<Conv> pem_convs_;
  Tensor level_embed_;
  Tensor prompt_queries_, reference_logits_;
  std::vector<GeneratorLayer> generator_;
  LayerNorm generator_norm_;

  Tensor seg_queries_;
  std::vector<DecoderBlock> decoder_;
  LayerNorm decoder_norm_;

  Linear query_embed_a_, query_embed_b_, pixel_embed_, region_score_;
  Tensor mask_bias_;
  Linear exist_a_, exist_b_;
};

// Foreground where the logit is positive; logits are [height, width].
mask::BinaryMask mask_from_logits(const Tensor& logits);

// Normalised [1, 3, H, W] input tensor of an 8-bit RGB image.
Tensor image_to_input(const synth::RgbImage& image);

}  // namespace omniseg::model
