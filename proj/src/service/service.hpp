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

// Inference service over a loaded network and a generated dataset: sample
// browsing, image serving and interactive segmentation, plus the HTTP
// front end that routes /v1 requests to it.

#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "omnimodel/model.hpp"
#include "synthref/dataset.hpp"

namespace omniseg::service {

inline constexpr int kPageSize = 20;

struct HttpReply {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

class Service {
 public:
  // Loads every manifest and scene index under `data_root` up front; the
  // network is never modified afterwards.
  Service(model::OmniSegNet net, const std::filesystem::path& data_root);

  const model::OmniSegNet& net() const { return net_; }

  nlohmann::json health() const;
  // Stable manifest order, `kPageSize` records per page, pages from 0.
  nlohmann::json list_samples(const std::string& split, int page) const;
  // `id` is a scene id or a sample id (which resolves to its target image).
  std::vector<std::uint8_t> image_png(const std::string& id) const;
  nlohmann::json segment(const nlohmann::json& request) const;

  // Routes one request; errors become JSON {"error": ...} replies.
  HttpReply handle(const std::string& method, const std::string& path,
                   const std::map<std::string, std::string>& query,
                   const std::string& body) const;

 private:
  const std::string& scene_of(const std::string& id) const;
  mask::BinaryMask reference_prompt(const nlohmann::json& reference) const;

  model::OmniSegNet net_;
  std::filesystem::path root_;
  std::map<std::string, std::vector<synth::ManifestRecord>> splits_;
  std::map<std::string, std::filesystem::path> scene_images_;
  std::map<std::string, std::string> sample_scenes_;
  std::map<std::string, synth::RgbImage> decoded_;
  mutable std::atomic<std::uint64_t> requests_{0};
  mutable std::atomic<std::uint64_t> segmentations_{0};
};

// HTTP front end. `bind` picks a free port when given 0.
class HttpServer {
 public:
  explicit HttpServer(const Service& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  int bind(const std::string& host, int port);
  // Blocks until stop(); a stop() issued before listen() makes it return at once.
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace omniseg::service
