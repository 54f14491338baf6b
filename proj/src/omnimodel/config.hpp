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

#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace omniseg::model {

struct ModelConfig {
  int d_model = 64;
  int heads = 8;
  int n_scales = 4;
  int prompt_generator_layers = 3;
  int decoder_blocks = 9;
  int decoder_groups = 3;
  int deformable_points = 4;  // per head and scale
  int max_text_len = 20;
  int prompt_query_len = 20;
  int seg_query_grid = 4;  // seg_query_grid^2 segmentation queries
  int input_size = 64;
  int vocab_size = 0;      // filled from the template vocabulary
  int text_layers = 2;
  int ffn_multiplier = 4;
  std::vector<int> backbone_channels = {32, 48, 64, 96};

  int seg_queries() const { return seg_query_grid * seg_query_grid; }
  int ffn_dim() const { return ffn_multiplier * d_model; }

  // Throws kConfig on any violated invariant.
  void validate() const;
};

// "desk" (d=64, 64x64 input) or "paper-faithful" (d=256, 480x480 input).
ModelConfig preset(const std::string& name);
// Reduced configuration used by the finite-difference suite.
ModelConfig gradcheck_preset();

nlohmann::json config_to_json(const ModelConfig& c);
ModelConfig config_from_json(const nlohmann::json& j);

}  // namespace omniseg::model
