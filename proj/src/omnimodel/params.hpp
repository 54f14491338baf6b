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

// Named parameter table shared by every submodule, and its checkpoint
// format.

#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "tensorkit/tensor.hpp"

namespace omniseg::model {

using tensor::Shape;
using tensor::Tensor;

class ParamStore {
 public:
  // Registers a trainable tensor. Names are unique.
  Tensor add(const std::string& name, Shape shape, std::vector<double> values);
  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  // Registration order.
  const std::vector<std::string>& names() const { return names_; }
  const std::vector<Tensor>& tensors() const { return tensors_; }
  std::vector<std::string> names_with_prefix(const std::string& prefix) const;
  std::size_t scalar_count() const;

  // FNV-1a over names, shapes and raw value bytes of every parameter whose
  // name starts with `prefix`.
  std::uint64_t hash(const std::string& prefix = "") const;
  bool all_finite() const;

  // Copies values from `other`; names and shapes must match exactly.
  void copy_from(const ParamStore& other);

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> tensors_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Initialisers drawing from a shared generator.
std::vector<double> uniform_values(std::size_t n, double bound, std::mt19937_64& rng);
std::vector<double> normal_values(std::size_t n, double stddev, std::mt19937_64& rng);

// Checkpoint layout, little-endian:
//   "OMNISEG\0", u32 version, u64 config length, config JSON bytes,
//   u64 entry count, then per entry: u32 name length, name bytes,
//   u32 rank, rank x u32 extents, numel x f64 values.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(const std::filesystem::path& path,
                      const nlohmann::json& config, const ParamStore& params);

struct CheckpointContents {
  nlohmann::json config;
  std::vector<std::string> names;
  std::vector<Shape> shapes;
  std::vector<std::vector<double>> values;
};
CheckpointContents read_checkpoint(const std::filesystem::path& path);

}  // namespace omniseg::model
