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

#include "omnimodel/params.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "common/error.hpp"

namespace omniseg::model {
namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'O', 'M', 'N', 'I', 'S', 'E', 'G', '\0'};

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001B3ULL;
  }
  return h;
}

template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T take(std::ifstream& in, const std::string& what) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  require(in.good(), ErrorKind::kFormat, "truncated checkpoint reading " + what);
  return v;
}

std::string take_bytes(std::ifstream& in, std::uint64_t n, const std::string& what) {
  require(n < (1ULL << 32), ErrorKind::kFormat, "implausible length for " + what);
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  require(in.good(), ErrorKind::kFormat, "truncated checkpoint reading " + what);
  return s;
}

}  // namespace

Tensor ParamStore::add(const std::string& name, Shape shape,
                       std::vector<double> values) {
  require(!contains(name), ErrorKind::kInvalidArgument,
          "duplicate parameter name: " + name);
  Tensor t = Tensor::from(std::move(shape), std::move(values), true);
  index_[name] = tensors_.size();
  names_.push_back(name);
  tensors_.push_back(t);
  return t;
}

const Tensor& ParamStore::get(const std::string& name) const {
  const auto it = index_.find(name);
  require(it != index_.end(), ErrorKind::kNotFound, "no parameter named " + name);
  return tensors_[it->second];
}

std::vector<std::string> ParamStore::names_with_prefix(const std::string& prefix) const {
  std::vector<std::string> out;
  for (const auto& n : names_)
    if (n.compare(0, prefix.size(), prefix) == 0) out.push_back(n);
  return out;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.numel();
  return n;
}

std::uint64_t ParamStore::hash(const std::string& prefix) const {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i].compare(0, prefix.size(), prefix) != 0) continue;
    h = fnv1a(h, names_[i].data(), names_[i].size());
    for (int e : tensors_[i].shape()) h = fnv1a(h, &e, sizeof e);
    const auto d = tensors_[i].data();
    h = fnv1a(h, d.data(), d.size() * sizeof(double));
  }
  return h;
}

bool ParamStore::all_finite() const {
  for (const auto& t : tensors_)
    for (double v : t.data())
      if (!std::isfinite(v)) return false;
  return true;
}

void ParamStore::copy_from(const ParamStore& other) {
  require(other.names_ == names_, ErrorKind::kFormat,
          "parameter tables differ in names or order");
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    require(other.tensors_[i].shape() == tensors_[i].shape(), ErrorKind::kFormat,
            "shape mismatch for " + names_[i]);
    const auto src = other.tensors_[i].data();
    auto dst = tensors_[i].mutable_data();
    std::copy(src.begin(), src.end(), dst.begin());
  }
}

std::vector<double> uniform_values(std::size_t n, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(-bound, bound);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

std::vector<double> normal_values(std::size_t n, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> d(0.0, stddev);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

void write_checkpoint(const std::filesystem::path& path,
                      const nlohmann::json& config, const ParamStore& params) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorKind::kIo, "cannot write " + path.string());
  out.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kCheckpointVersion);
  const std::string cfg = config.dump();
  put<std::uint64_t>(out, cfg.size());
  out.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  put<std::uint64_t>(out, params.names().size());
  for (std::size_t i = 0; i < params.names().size(); ++i) {
    const auto& name = params.names()[i];
    const auto& t = params.tensors()[i];
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (int e : t.shape()) put<std::uint32_t>(out, static_cast<std::uint32_t>(e));
    const auto d = t.data();
    out.write(reinterpret_cast<const char*>(d.data()),
              static_cast<std::streamsize>(d.size() * sizeof(double)));
  }
  out.flush();
  require(out.good(), ErrorKind::kIo, "write failed for " + path.string());
}

CheckpointContents read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::kNotFound, "cannot open checkpoint " + path.string());
  char magic[8];
  in.read(magic, sizeof magic);
  require(in.good() && std::memcmp(magic, kMagic, sizeof magic) == 0,
          ErrorKind::kFormat, "not an omniseg checkpoint: " + path.string());
  const auto version = take<std::uint32_t>(in, "version");
  require(version == kCheckpointVersion, ErrorKind::kFormat,
          "unsupported checkpoint version " + std::to_string(version));
  CheckpointContents c;
  const auto cfg_len = take<std::uint64_t>(in, "config length");
  try {
    c.config = nlohmann::json::parse(take_bytes(in, cfg_len, "config"));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat, std::string("bad checkpoint config: ") + e.what());
  }
  const auto count = take<std::uint64_t>(in, "entry count");
  require(count < (1ULL << 20), ErrorKind::kFormat, "implausible entry count");
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name_len = take<std::uint32_t>(in, "name length");
    c.names.push_back(take_bytes(in, name_len, "name"));
    const auto rank = take<std::uint32_t>(in, "rank");
    require(rank <= 8, ErrorKind::kFormat, "implausible rank");
    Shape shape;
    std::size_t numel = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      shape.push_back(static_cast<int>(take<std::uint32_t>(in, "extent")));
      numel *= static_cast<std::size_t>(shape.back());
    }
    require(numel < (1ULL << 30), ErrorKind::kFormat, "implausible tensor size");
    std::vector<double> v(numel);
    in.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(numel * sizeof(double)));
    require(in.good(), ErrorKind::kFormat, "truncated values for " + c.names.back());
    c.shapes.push_back(std::move(shape));
    c.values.push_back(std::move(v));
  }
  return c;
}

}  // namespace omniseg::model
