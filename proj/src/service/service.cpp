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

#include "service/service.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <thread>

#include <httplib.h>

#include "common/error.hpp"
#include "maskgeo/mask_json.hpp"
#include "synthref/image_io.hpp"
#include "synthref/text.hpp"
#include "tensorkit/tensor.hpp"

namespace omniseg::service {

using nlohmann::json;

namespace {

int http_status(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kNotFound:
      return 404;
    case ErrorKind::kInvalidArgument:
    case ErrorKind::kDimension:
    case ErrorKind::kFormat:
    case ErrorKind::kUsage:
    case ErrorKind::kEmptyRegion:
      return 400;
    default:
      return 500;
  }
}

HttpReply json_reply(int status, const json& j) {
  return {status, "application/json", j.dump()};
}

const json& member(const json& j, const char* key) {
  require(j.is_object() && j.contains(key), ErrorKind::kInvalidArgument,
          std::string("missing field: ") + key);
  return j.at(key);
}

std::vector<mask::Stroke> parse_strokes(const json& payload) {
  const json& list = payload.is_object() ? member(payload, "strokes") : payload;
  require(list.is_array(), ErrorKind::kInvalidArgument, "strokes must be a list of polylines");
  std::vector<mask::Stroke> strokes;
  for (const auto& line : list) {
    require(line.is_array() && !line.empty(), ErrorKind::kInvalidArgument,
            "each stroke must be a non-empty list of [x, y] points");
    mask::Stroke s;
    for (const auto& pt : line) {
      require(pt.is_array() && pt.size() == 2 && pt[0].is_number() && pt[1].is_number(),
              ErrorKind::kInvalidArgument, "stroke points must be [x, y] number pairs");
      s.emplace_back(pt[0].get<double>(), pt[1].get<double>());
    }
    strokes.push_back(std::move(s));
  }
  return strokes;
}

json logit_stats(const tensor::Tensor& logits) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo, total = 0.0;
  std::size_t positive = 0;
  for (double v : logits.data()) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
    total += v;
    positive += v > 0.0;
  }
  const double n = static_cast<double>(logits.numel());
  return {{"min", lo}, {"max", hi}, {"mean", total / n}, {"positive_fraction", positive / n}};
}

}  // namespace

Service::Service(model::OmniSegNet net, const std::filesystem::path& data_root)
    : net_(std::move(net)), root_(data_root) {
  for (const auto& s : synth::load_scenes(root_)) {
    scene_images_[s.id] = root_ / s.image;
    decoded_[s.id] = synth::read_png(root_ / s.image);
  }
  for (const auto& split : synth::kSplitNames) {
    auto records = synth::load_manifest(root_, split);
    for (const auto& r : records) sample_scenes_[r.id] = r.scene;
    splits_[split] = std::move(records);
  }
}

const std::string& Service::scene_of(const std::string& id) const {
  if (auto it = scene_images_.find(id); it != scene_images_.end()) return it->first;
  auto it = sample_scenes_.find(id);
  require(it != sample_scenes_.end(), ErrorKind::kNotFound, "unknown image id: " + id);
  return it->second;
}

json Service::health() const {
  const auto& c = net_.config();
  return {{"status", "ok"},
          {"input_size", c.input_size},
          {"parameters", net_.params().scalar_count()},
          {"scenes", scene_images_.size()},
          {"requests", requests_.load()},
          {"segmentations", segmentations_.load()}};
}

json Service::list_samples(const std::string& split, int page) const {
  auto it = splits_.find(split);
  require(it != splits_.end(), ErrorKind::kNotFound, "unknown split: " + split);
  require(page >= 0, ErrorKind::kInvalidArgument, "page must be non-negative");
  const auto& records = it->second;
  const int total = static_cast<int>(records.size());
  const int pages = (total + kPageSize - 1) / kPageSize;
  json samples = json::array();
  for (int i = page * kPageSize; i < std::min(total, (page + 1) * kPageSize); ++i) {
    const auto& r = records[i];
    const auto& img = decoded_.at(r.scene);
    json s = {{"id", r.id},
              {"image_id", r.scene},
              {"width", img.width},
              {"height", img.height},
              {"case", synth::case_name(r.case_label)},
              {"exists", r.exists}};
    if (r.text) s["text"] = *r.text;
    if (r.visual) {
      s["reference"] = {{"image_id", r.visual->ref_scene},
                        {"kind", synth::prompt_kind_name(r.visual->kind)},
                        {"prompt", mask::rle_to_json(r.visual->prompt)}};
    }
    samples.push_back(std::move(s));
  }
  return {{"split", split},
          {"page", page},
          {"page_size", kPageSize},
          {"total", total},
          {"pages", pages},
          {"samples", std::move(samples)}};
}

std::vector<std::uint8_t> Service::image_png(const std::string& id) const {
  return synth::read_file(scene_images_.at(scene_of(id)));
}

mask::BinaryMask Service::reference_prompt(const json& reference) const {
  const int size = net_.config().input_size;
  const auto kind = synth::parse_prompt_kind(member(reference, "kind").get<std::string>());
  const json& payload = member(reference, "payload");
  mask::BinaryMask prompt;
  switch (kind) {
    case synth::PromptKind::kMask:
      prompt = mask::rle_decode(
          mask::rle_from_json(payload.contains("rle") ? payload.at("rle") : payload));
      break;
    case synth::PromptKind::kBox: {
      const auto box = mask::box_from_json(payload.contains("box") ? payload.at("box") : payload);
      require(box.row_min >= 0 && box.col_min >= 0 && box.row_max < size &&
                  box.col_max < size && box.row_min <= box.row_max && box.col_min <= box.col_max,
              ErrorKind::kInvalidArgument, "box must lie inside the reference image");
      prompt = mask::rasterize_box(box, size, size);
      break;
    }
    case synth::PromptKind::kScribble:
      prompt = mask::rasterize_strokes(parse_strokes(payload), size, size);
      break;
  }
  require(prompt.height() == size && prompt.width() == size, ErrorKind::kInvalidArgument,
          "reference prompt must be " + std::to_string(size) + "x" + std::to_string(size));
  require(!prompt.empty_region(), ErrorKind::kInvalidArgument, "reference prompt is empty");
  return prompt;
}

json Service::segment(const json& request) const {
  const auto t0 = std::chrono::steady_clock::now();
  require(request.is_object(), ErrorKind::kInvalidArgument, "request must be a JSON object");
  const std::string& target = scene_of(member(request, "target_id").get<std::string>());

  model::PromptSet prompts;
  if (request.contains("text") && !request.at("text").is_null()) {
    const std::string text = request.at("text").get<std::string>();
    if (!synth::Vocabulary::split_words(text).empty())
      prompts.text_tokens = synth::Vocabulary::standard().encode(text, true);
  }
  mask::BinaryMask prompt;
  if (request.contains("reference") && !request.at("reference").is_null()) {
    const json& ref = request.at("reference");
    const std::string& ref_scene = scene_of(member(ref, "image_id").get<std::string>());
    prompt = reference_prompt(ref);
    prompts.visual = model::VisualInput{model::image_to_input(decoded_.at(ref_scene)), prompt};
  }
  require(prompts.text_tokens || prompts.visual, ErrorKind::kUsage,
          "at least one prompt required");

  model::ForwardOutput out;
  {
    tensor::NoGradGuard no_grad;
    out = net_.forward(model::image_to_input(decoded_.at(target)), prompts);
  }
  const bool no_target = !out.exists;
  json masks = json::array();
  double best = 0.0;
  for (const auto& so : out.sources) {
    auto pred = model::mask_from_logits(so.mask_logits);
    if (no_target) pred = mask::BinaryMask(pred.height(), pred.width());
    masks.push_back({{"source", synth::source_name(so.source)},
                     {"rle", mask::rle_to_json(mask::rle_encode(pred))},
                     {"exists_prob", so.exist_prob},
                     {"logit_stats", logit_stats(so.mask_logits)}});
    best = std::max(best, so.exist_prob);
  }
  ++segmentations_;
  json reply = {{"target_id", target},
                {"masks", std::move(masks)},
                {"exists_prob", best},
                {"predicted_no_target", no_target}};
  if (prompts.visual) reply["reference_prompt"] = mask::rle_to_json(mask::rle_encode(prompt));
  reply["latency_ms"] =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return reply;
}

HttpReply Service::handle(const std::string& method, const std::string& path,
                          const std::map<std::string, std::string>& query,
                          const std::string& body) const {
  ++requests_;
  static const std::string kImagePrefix = "/v1/image/";
  try {
    if (path == "/v1/health") {
      require(method == "GET", ErrorKind::kUsage, "use GET");
      return json_reply(200, health());
    }
    if (path == "/v1/samples") {
      require(method == "GET", ErrorKind::kUsage, "use GET");
      auto split = query.find("split");
      require(split != query.end(), ErrorKind::kInvalidArgument, "split is required");
      int page = 0;
      if (auto p = query.find("page"); p != query.end()) {
        std::size_t used = 0;
        try {
          page = std::stoi(p->second, &used);
        } catch (const std::exception&) {
          used = 0;
        }
        require(used > 0 && used == p->second.size(), ErrorKind::kInvalidArgument,
                "page must be an integer");
      }
      return json_reply(200, list_samples(split->second, page));
    }
    if (path.rfind(kImagePrefix, 0) == 0) {
      require(method == "GET", ErrorKind::kUsage, "use GET");
      const auto png = image_png(path.substr(kImagePrefix.size()));
      return {200, "image/png", std::string(png.begin(), png.end())};
    }
    if (path == "/v1/segment") {
      require(method == "POST", ErrorKind::kUsage, "use POST");
      json request;
      try {
        request = json::parse(body);
      } catch (const json::exception& e) {
        fail(ErrorKind::kInvalidArgument, std::string("malformed JSON: ") + e.what());
      }
      return json_reply(200, segment(request));
    }
    return json_reply(404, {{"error", "no such endpoint: " + path}});
  } catch (const Error& e) {
    return json_reply(http_status(e.kind()), {{"error", e.what()}});
  } catch (const json::exception& e) {
    return json_reply(400, {{"error", e.what()}});
  } catch (const std::exception& e) {
    return json_reply(500, {{"error", e.what()}});
  }
}

struct HttpServer::Impl {
  const Service& service;
  httplib::Server server;
  std::atomic<bool> listening{false};
  std::atomic<bool> stop_requested{false};
  std::atomic<bool> finished{false};

  explicit Impl(const Service& s) : service(s) {
    auto route = [this](const httplib::Request& req, httplib::Response& res) {
      std::map<std::string, std::string> query;
      for (const auto& [k, v] : req.params) query.emplace(k, v);
      const HttpReply reply = service.handle(req.method, req.path, query, req.body);
      res.status = reply.status;
      res.set_content(reply.body, reply.content_type);
    };
    server.Get(R"(/v1/.*)", route);
    server.Post(R"(/v1/.*)", route);
  }
};

HttpServer::HttpServer(const Service& service) : impl_(std::make_unique<Impl>(service)) {}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  int bound = -1;
  if (port == 0)
    bound = impl_->server.bind_to_any_port(host);
  else if (impl_->server.bind_to_port(host, port))
    bound = port;
  require(bound > 0, ErrorKind::kIo, "cannot bind " + host + ":" + std::to_string(port));
  return bound;
}

void HttpServer::listen() {
  impl_->listening = true;
  if (!impl_->stop_requested) impl_->server.listen_after_bind();
  impl_->finished = true;
}

void HttpServer::stop() {
  if (!impl_) return;
  impl_->stop_requested = true;
  if (!impl_->listening) return;
  while (!impl_->server.is_running() && !impl_->finished)
    std::this_thread::sleep_for(std::chrono::milliseconds(1));
  impl_->server.stop();
}

}  // namespace omniseg::service
