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

#include "maskgeo/mask_json.hpp"

#include "common/error.hpp"

namespace omniseg::mask {

nlohmann::json rle_to_json(const RleMask& r) {
  return {{"h", r.height}, {"w", r.width}, {"runs", r.runs}};
}

RleMask rle_from_json(const nlohmann::json& j) {
  require(j.is_object() && j.contains("h") && j.contains("w") &&
              j.contains("runs") && j["runs"].is_array(),
          ErrorKind::kFormat, "rle: expected {\"h\", \"w\", \"runs\"}");
  RleMask r;
  try {
    r.height = j.at("h").get<int>();
    r.width = j.at("w").get<int>();
    r.runs = j.at("runs").get<std::vector<std::uint32_t>>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat, std::string("rle: ") + e.what());
  }
  // Validates the run total.
  (void)rle_decode(r);
  return r;
}

nlohmann::json box_to_json(const Box& b) {
  return {{"row_min", b.row_min},
          {"col_min", b.col_min},
          {"row_max", b.row_max},
          {"col_max", b.col_max}};
}

Box box_from_json(const nlohmann::json& j) {
  try {
    return Box{j.at("row_min").get<int>(), j.at("col_min").get<int>(),
               j.at("row_max").get<int>(), j.at("col_max").get<int>()};
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat, std::string("box: ") + e.what());
  }
}

}  // namespace omniseg::mask
