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

#include "omniseg/omniseg.h"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <filesystem>
#include <memory>
#include <optional>
#include <regex>
#include <string>
#include <thread>

#include <json.hpp>

#include "common/error.hpp"
#include "evalkit/metrics.hpp"
#include "omnimodel/gradient_suite.hpp"
#include "omnimodel/model.hpp"
#include "omnimodel/sample_store.hpp"
#include "service/service.hpp"
#include "synthref/dataset.hpp"
#include "trainer/trainer.hpp"

struct omniseg_model {
  omniseg::model::OmniSegNet net;
};

struct omniseg_service {
  std::unique_ptr<omniseg::service::Service> service;
};

struct omniseg_server {
  std::unique_ptr<omniseg::service::HttpServer> http;
  std::thread thread;
};

namespace {

using nlohmann::json;
using omniseg::ErrorKind;
using omniseg::require;

thread_local std::string g_last_error;

omniseg_status status_of(ErrorKind kind) { return static_cast<omniseg_status>(kind); }

// Runs `fn`, translating exceptions into status codes and the thread's
// last-error message.
template <typename Fn>
omniseg_status guarded(Fn&& fn) {
  g_last_error.clear();
  try {
    fn();
    return OMNISEG_OK;
  } catch (const omniseg::Error& e) {
    g_last_error = e.what();
    return status_of(e.kind());
  } catch (const json::exception& e) {
    g_last_error = e.what();
    return OMNISEG_ERR_FORMAT;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return OMNISEG_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return OMNISEG_ERR_INTERNAL;
  }
}

void require_arg(const void* p, const char* name) {
  require(p != nullptr, ErrorKind::kInvalidArgument, std::string(name) + " must not be null");
}

char* copy_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void emit(char** out, const json& j) {
  if (out) *out = copy_string(j.dump());
}

json parse_json(const char* text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    omniseg::fail(ErrorKind::kInvalidArgument, std::string(what) + ": " + e.what());
  }
}

json dataset_summary_to_json(const omniseg::synth::DatasetSummary& s) {
  json splits = json::object();
  for (const auto& [name, st] : s.splits)
    splits[name] = {{"samples", st.samples}, {"cases", st.cases}, {"modalities", st.modalities}};
  return {{"scenes", s.scenes}, {"files", s.files.size()}, {"splits", splits}};
}

int stage_from_checkpoint(const std::string& path) {
  static const std::regex pattern(R"(stage([123])\.ckpt$)");
  std::smatch m;
  const std::string name = std::filesystem::path(path).filename().string();
  require(std::regex_search(name, m, pattern), ErrorKind::kUsage,
          "cannot infer the next stage from " + name + "; pass first_stage");
  return std::stoi(m[1].str()) + 1;
}

}  // namespace

extern "C" {

const char* omniseg_version(void) { return "0.1.0"; }

const char* omniseg_status_name(omniseg_status status) {
  switch (status) {
    case OMNISEG_OK: return "ok";
    case OMNISEG_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case OMNISEG_ERR_DIMENSION: return "dimension";
    case OMNISEG_ERR_CONFIG: return "config";
    case OMNISEG_ERR_FORMAT: return "format";
    case OMNISEG_ERR_NOT_FOUND: return "not_found";
    case OMNISEG_ERR_IO: return "io";
    case OMNISEG_ERR_NUMERIC: return "numeric";
    case OMNISEG_ERR_EMPTY_REGION: return "empty_region";
    case OMNISEG_ERR_UNAVAILABLE: return "unavailable";
    case OMNISEG_ERR_USAGE: return "usage";
    case OMNISEG_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* omniseg_last_error(void) { return g_last_error.c_str(); }

void omniseg_string_free(char* s) { std::free(s); }

void omniseg_buffer_free(uint8_t* data) { std::free(data); }

omniseg_status omniseg_build_dataset(uint64_t seed, const char* config_json, const char* out_dir,
                                     char** summary_json) {
  return guarded([&] {
    require_arg(out_dir, "out_dir");
    json j = omniseg::synth::config_to_json(omniseg::synth::DatasetConfig{});
    if (config_json) j.merge_patch(parse_json(config_json, "dataset config"));
    j["seed"] = seed;
    const auto summary =
        omniseg::synth::build_dataset(omniseg::synth::config_from_json(j), out_dir);
    emit(summary_json, dataset_summary_to_json(summary));
  });
}

omniseg_status omniseg_validate_dataset(const char* root, char** report_json) {
  return guarded([&] {
    require_arg(root, "root");
    const auto r = omniseg::synth::validate_dataset(root);
    emit(report_json, {{"ok", r.ok()},
                       {"records", r.records},
                       {"scenes", r.scenes},
                       {"violations", r.violations}});
  });
}

omniseg_status omniseg_model_create(const char* preset, const char* overrides_json, uint64_t seed,
                                    omniseg_model** out) {
  return guarded([&] {
    require_arg(out, "out");
    omniseg::trainer::TrainConfig tc;
    if (preset) tc.preset = preset;
    if (overrides_json) tc.model_overrides = parse_json(overrides_json, "model overrides");
    *out = new omniseg_model{omniseg::model::OmniSegNet(tc.model_config(), seed)};
  });
}

omniseg_status omniseg_model_load(const char* path, omniseg_model** out) {
  return guarded([&] {
    require_arg(path, "path");
    require_arg(out, "out");
    *out = new omniseg_model{omniseg::model::OmniSegNet::load(path)};
  });
}

omniseg_status omniseg_model_save(const omniseg_model* model, const char* path) {
  return guarded([&] {
    require_arg(model, "model");
    require_arg(path, "path");
    model->net.save(path);
  });
}

omniseg_status omniseg_model_describe(const omniseg_model* model, char** info_json) {
  return guarded([&] {
    require_arg(model, "model");
    emit(info_json, {{"config", omniseg::model::config_to_json(model->net.config())},
                     {"parameters", model->net.params().scalar_count()},
                     {"tensors", model->net.params().names().size()}});
  });
}

omniseg_status omniseg_model_hash(const omniseg_model* model, const char* prefix,
                                  uint64_t* hash) {
  return guarded([&] {
    require_arg(model, "model");
    require_arg(hash, "hash");
    *hash = model->net.params().hash(prefix ? prefix : "");
  });
}

void omniseg_model_free(omniseg_model* model) { delete model; }

omniseg_status omniseg_train(const omniseg_train_options* options, char** summary_json) {
  return guarded([&] {
    require_arg(options, "options");
    require_arg(options->data_root, "data_root");
    require_arg(options->out_dir, "out_dir");
    auto cfg = omniseg::trainer::parse_train_config(options->config_text ? options->config_text
                                                                         : "");
    if (options->override_seed) cfg.seed = options->seed;
    if (options->preset) cfg.preset = options->preset;
    cfg.validate();

    int first = options->first_stage;
    std::optional<omniseg::model::OmniSegNet> net;
    if (options->resume_checkpoint) {
      net.emplace(omniseg::model::OmniSegNet::load(options->resume_checkpoint));
      if (first == 0) first = stage_from_checkpoint(options->resume_checkpoint);
    } else {
      net.emplace(cfg.model_config(), cfg.seed);
      if (first == 0) first = 1;
    }
    require(first >= 1 && first <= 3, ErrorKind::kUsage, "first_stage must be 1, 2 or 3");
    std::filesystem::create_directories(options->out_dir);
    omniseg::model::SampleStore store(options->data_root);
    omniseg::trainer::Trainer trainer(cfg, store);
    const auto summary = trainer.run(*net, options->out_dir, first);
    json j = omniseg::trainer::train_summary_to_json(summary);
    j["config"] = omniseg::trainer::train_config_to_json(cfg);
    emit(summary_json, j);
  });
}

omniseg_status omniseg_evaluate(const omniseg_model* model, const char* data_root,
                                const char* split, const char* prompt_kind, int limit,
                                const char* out_dir, char** report_json) {
  return guarded([&] {
    require_arg(model, "model");
    require_arg(data_root, "data_root");
    require_arg(split, "split");
    omniseg::eval::EvalOptions opt;
    if (prompt_kind) opt.prompt_kind = omniseg::synth::parse_prompt_kind(prompt_kind);
    opt.limit = limit;
    omniseg::model::SampleStore store(data_root);
    const auto result = omniseg::eval::evaluate(model->net, store, split, opt);
    const json report = omniseg::eval::report_to_json(result.report);
    if (out_dir) {
      const std::filesystem::path dir(out_dir);
      std::filesystem::create_directories(dir);
      omniseg::synth::write_file(dir / "report.json",
                                 [&] {
                                   const std::string s = report.dump(2) + "\n";
                                   return std::vector<std::uint8_t>(s.begin(), s.end());
                                 }());
      omniseg::eval::write_records(dir / "records.jsonl", result.records);
    }
    emit(report_json, report);
  });
}

omniseg_status omniseg_gradcheck(uint64_t seed, char** report_json) {
  return guarded([&] {
    const auto r = omniseg::model::run_gradient_suite(seed);
    json checks = json::array();
    for (const auto& c : r.results)
      checks.push_back({{"name", c.name},
                        {"entries", c.entries_checked},
                        {"max_rel_error", c.max_rel_error},
                        {"tolerance", c.tolerance},
                        {"passed", c.passed}});
    emit(report_json, {{"passed", r.passed()}, {"seconds", r.seconds}, {"checks", checks}});
  });
}

omniseg_status omniseg_service_create(const omniseg_model* model, const char* data_root,
                                      omniseg_service** out) {
  return guarded([&] {
    require_arg(model, "model");
    require_arg(data_root, "data_root");
    require_arg(out, "out");
    auto svc = std::make_unique<omniseg::service::Service>(model->net, data_root);
    *out = new omniseg_service{std::move(svc)};
  });
}

void omniseg_service_free(omniseg_service* service) { delete service; }

omniseg_status omniseg_service_segment(const omniseg_service* service, const char* request_json,
                                       char** response_json) {
  return guarded([&] {
    require_arg(service, "service");
    require_arg(request_json, "request_json");
    emit(response_json, service->service->segment(parse_json(request_json, "request")));
  });
}

omniseg_status omniseg_service_samples(const omniseg_service* service, const char* split,
                                       int page, char** page_json) {
  return guarded([&] {
    require_arg(service, "service");
    require_arg(split, "split");
    emit(page_json, service->service->list_samples(split, page));
  });
}

omniseg_status omniseg_service_image(const omniseg_service* service, const char* id,
                                     uint8_t** png, size_t* size) {
  return guarded([&] {
    require_arg(service, "service");
    require_arg(id, "id");
    require_arg(png, "png");
    require_arg(size, "size");
    const auto bytes = service->service->image_png(id);
    auto* buf = static_cast<uint8_t*>(std::malloc(bytes.size()));
    if (!buf) throw std::bad_alloc();
    std::memcpy(buf, bytes.data(), bytes.size());
    *png = buf;
    *size = bytes.size();
  });
}

omniseg_status omniseg_server_start(const omniseg_service* service, const char* host, int port,
                                    omniseg_server** out, int* bound_port) {
  return guarded([&] {
    require_arg(service, "service");
    require_arg(out, "out");
    require(port >= 0 && port <= 65535, ErrorKind::kInvalidArgument, "port out of range");
    auto server = std::make_unique<omniseg_server>();
    server->http = std::make_unique<omniseg::service::HttpServer>(*service->service);
    const int p = server->http->bind(host ? host : "127.0.0.1", port);
    auto* http = server->http.get();
    server->thread = std::thread([http] { http->listen(); });
    if (bound_port) *bound_port = p;
    *out = server.release();
  });
}

omniseg_status omniseg_server_wait(omniseg_server* server) {
  return guarded([&] {
    require_arg(server, "server");
    if (server->thread.joinable()) server->thread.join();
  });
}

omniseg_status omniseg_server_stop(omniseg_server* server) {
  return guarded([&] {
    require_arg(server, "server");
    server->http->stop();
  });
}

void omniseg_server_free(omniseg_server* server) {
  if (!server) return;
  server->http->stop();
  if (server->thread.joinable()) server->thread.join();
  delete server;
}

}  // extern "C"
