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

#include "omnimodel/config.hpp"

#include "common/error.hpp"
#include "synthref/text.hpp"

namespace omniseg::model {

void ModelConfig::validate() const {
  auto need = [](bool ok, const std::string& what) {
    require(ok, ErrorKind::kConfig, "model config: " + what);
  };
  need(d_model > 0 && heads > 0, "d_model and heads must be positive");
  need(d_model % heads == 0, "d_model must be divisible by heads");
  need(d_model % 4 == 0, "d_model must be divisible by 4 for 2-D positions");
  need(n_scales == 4, "the pyramid has exactly 4 scales");
  need(static_cast<int>(backbone_channels.size()) == n_scales,
       "one backbone width per scale");
  for (int c : backbone_channels) need(c > 0, "backbone widths must be positive");
  need(prompt_generator_layers >= 1, "prompt generator needs at least one layer");
  need(decoder_groups == n_scales - 1, "one decoder group per decoder scale");
  need(decoder_blocks > 0 && decoder_blocks % decoder_groups == 0,
       "decoder blocks must split evenly into groups");
  need(deformable_points >= 1, "deformable points must be positive");
  need(max_text_len > 0 && prompt_query_len == max_text_len,
       "prompt query length must equal the maximum text length");
  need(seg_query_grid >= 1, "seg query grid must be positive");
  need(input_size >= 8, "input size must be at least 8");
  need(vocab_size > 2, "vocabulary must be set");
  need(text_layers >= 1 && ffn_multiplier >= 1, "text layers and ffn width");
}

ModelConfig preset(const std::string& name) {
  ModelConfig c;
  c.vocab_size = synth::Vocabulary::standard().size();
  if (name == "desk") return c;
  if (name == "paper-faithful") {
    c.d_model = 256;
    c.input_size = 480;
    c.backbone_channels = {128, 256, 512, 1024};
    return c;
  }
  fail(ErrorKind::kConfig, "unknown preset: " + name);
}

ModelConfig gradcheck_preset() {
  ModelConfig c = preset("desk");
  c.d_model = 16;
  c.heads = 2;
  c.input_size = 8;
  c.deformable_points = 2;
  c.prompt_generator_layers = 3;
  c.decoder_blocks = 9;
  c.seg_query_grid = 2;
  c.ffn_multiplier = 2;
  c.backbone_channels = {4, 6, 8, 8};
  return c;
}

nlohmann::json config_to_json(const ModelConfig& c) {
  return {{"d_model", c.d_model},
          {"heads", c.heads},
          {"n_scales", c.n_scales},
          {"prompt_generator_layers", c.prompt_generator_layers},
          {"decoder_blocks", c.decoder_blocks},
          {"decoder_groups", c.decoder_groups},
          {"deformable_points", c.deformable_points},
          {"max_text_len", c.max_text_len},
          {"prompt_query_len", c.prompt_query_len},
          {"seg_query_grid", c.seg_query_grid},
          {"input_size", c.input_size},
          {"vocab_size", c.vocab_size},
          {"text_layers", c.text_layers},
          {"ffn_multiplier", c.ffn_multiplier},
          {"backbone_channels", c.backbone_channels}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  try {
    ModelConfig c;
    c.d_model = j.at("d_model").get<int>();
    c.heads = j.at("heads").get<int>();
    c.n_scales = j.at("n_scales").get<int>();
    c.prompt_generator_layers = j.at("prompt_generator_layers").get<int>();
    c.decoder_blocks = j.at("decoder_blocks").get<int>();
    c.decoder_groups = j.at("decoder_groups").get<int>();
    c.deformable_points = j.at("deformable_points").get<int>();
    c.max_text_len = j.at("max_text_len").get<int>();
    c.prompt_query_len = j.at("prompt_query_len").get<int>();
    c.seg_query_grid = j.at("seg_query_grid").get<int>();
    c.input_size = j.at("input_size").get<int>();
    c.vocab_size = j.at("vocab_size").get<int>();
    c.text_layers = j.at("text_layers").get<int>();
    c.ffn_multiplier = j.at("ffn_multiplier").get<int>();
    c.backbone_channels = j.at("backbone_channels").get<std::vector<int>>();
    return c;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat, std::string("malformed model config: ") + e.what());
  }
}

}  // namespace omniseg::model
