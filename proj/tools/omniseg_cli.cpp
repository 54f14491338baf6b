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

// omniseg command-line tool: dataset generation, training, evaluation,
// gradient checking, single-request inference and the HTTP service.

#include <omniseg/omniseg.h>

#include <csignal>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

struct CliError {
  omniseg_status status;
  std::string message;
};

void check(omniseg_status s) {
  if (s != OMNISEG_OK) throw CliError{s, omniseg_last_error()};
}

// Takes ownership of a C API string.
std::string take(char* s) {
  std::string out = s ? s : "";
  omniseg_string_free(s);
  return out;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CliError{OMNISEG_ERR_NOT_FOUND, "cannot read " + path.string()};
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void print_json(const std::string& text) { std::cout << json::parse(text).dump(2) << "\n"; }

class Model {
 public:
  Model() = default;
  ~Model() { omniseg_model_free(ptr_); }
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  omniseg_model** out() { return &ptr_; }
  const omniseg_model* get() const { return ptr_; }

 private:
  omniseg_model* ptr_ = nullptr;
};

// `--ckpt` accepts a path, a path without ".ckpt", or a bare checkpoint name
// looked up under `run_dir`.
fs::path resolve_checkpoint(const std::string& value, const fs::path& run_dir) {
  const std::vector<fs::path> candidates = {value, value + ".ckpt", run_dir / value,
                                            run_dir / (value + ".ckpt")};
  for (const auto& c : candidates)
    if (fs::is_regular_file(c)) return c;
  throw CliError{OMNISEG_ERR_NOT_FOUND, "checkpoint not found: " + value};
}

void open_model(Model& m, const std::string& ckpt, const fs::path& run_dir,
                const std::string& preset, std::uint64_t seed) {
  if (!ckpt.empty()) {
    const fs::path path = resolve_checkpoint(ckpt, run_dir);
    check(omniseg_model_load(path.string().c_str(), m.out()));
    std::cerr << "loaded " << path.string() << "\n";
  } else {
    std::cerr << "no --ckpt given; using an untrained " << preset << " model\n";
    check(omniseg_model_create(preset.c_str(), nullptr, seed, m.out()));
  }
}

omniseg_server* g_server = nullptr;

void on_signal(int) {
  if (g_server) omniseg_server_stop(g_server);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"omniseg: omni-prompt referring segmentation"};
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  std::string out, config, ckpt, split, preset = "desk", data = "data", run_dir = "runs";
  std::string prompt_kind, request, host = "127.0.0.1";
  int port = 8080, limit = 0, first_stage = 0;

  auto* build = app.add_subcommand("build-data", "Generate and validate the synthetic dataset");
  build->add_option("--seed", seed, "Dataset seed");
  build->add_option("--out", out, "Output directory")->required();
  build->add_option("--config", config, "JSON file with dataset overrides");

  auto* train = app.add_subcommand("train", "Run the three-stage training schedule");
  auto* train_seed = train->add_option("--seed", seed, "Training seed (overrides the config)");
  train->add_option("--data", data, "Dataset directory")->capture_default_str();
  train->add_option("--config", config, "key=value training config file");
  auto* train_preset =
      train->add_option("--preset", preset, "Model preset")->check(CLI::IsMember({"desk", "paper-faithful"}));
  train->add_option("--out", out, "Run directory for checkpoints and logs")->default_str("runs");
  train->add_option("--ckpt", ckpt, "Resume from this stage checkpoint");
  train->add_option("--first-stage", first_stage, "Stage to start from (1-3)")->check(CLI::Range(1, 3));

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a test split");
  eval->add_option("--data", data, "Dataset directory")->capture_default_str();
  eval->add_option("--ckpt", ckpt, "Checkpoint path or name under --run-dir");
  eval->add_option("--run-dir", run_dir, "Where checkpoint names are looked up")->capture_default_str();
  eval->add_option("--split", split, "Split to evaluate")->required();
  eval->add_option("--prompt-kind", prompt_kind, "Re-derive visual prompts as mask, box or scribble")
      ->check(CLI::IsMember({"mask", "box", "scribble"}));
  eval->add_option("--limit", limit, "Evaluate only the first N samples");
  eval->add_option("--out", out, "Directory for report.json and records.jsonl");
  eval->add_option("--preset", preset, "Preset for an untrained model when --ckpt is absent")
      ->check(CLI::IsMember({"desk", "paper-faithful"}));
  eval->add_option("--seed", seed, "Seed for an untrained model");

  auto* grad = app.add_subcommand("gradcheck", "Run the finite-difference gradient suite");
  grad->add_option("--seed", seed, "Seed for the random inputs");

  auto* infer = app.add_subcommand("infer", "Segment one request and print the response");
  infer->add_option("--data", data, "Dataset directory")->capture_default_str();
  infer->add_option("--ckpt", ckpt, "Checkpoint path or name under --run-dir");
  infer->add_option("--run-dir", run_dir, "Where checkpoint names are looked up")->capture_default_str();
  infer->add_option("--request", request, "Request JSON, or @file")->required();
  infer->add_option("--preset", preset, "Preset for an untrained model when --ckpt is absent")
      ->check(CLI::IsMember({"desk", "paper-faithful"}));
  infer->add_option("--seed", seed, "Seed for an untrained model");

  auto* serve = app.add_subcommand("serve", "Serve the HTTP API");
  serve->add_option("--data", data, "Dataset directory")->capture_default_str();
  serve->add_option("--ckpt", ckpt, "Checkpoint path or name under --run-dir");
  serve->add_option("--run-dir", run_dir, "Where checkpoint names are looked up")->capture_default_str();
  serve->add_option("--host", host, "Bind address")->capture_default_str();
  serve->add_option("--port", port, "Port (0 picks a free one)")->capture_default_str();
  serve->add_option("--preset", preset, "Preset for an untrained model when --ckpt is absent")
      ->check(CLI::IsMember({"desk", "paper-faithful"}));
  serve->add_option("--seed", seed, "Seed for an untrained model");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (*build) {
      std::optional<std::string> overrides;
      if (!config.empty()) overrides = read_text(config);
      char* summary = nullptr;
      check(omniseg_build_dataset(seed, overrides ? overrides->c_str() : nullptr, out.c_str(),
                                  &summary));
      print_json(take(summary));
      char* report = nullptr;
      check(omniseg_validate_dataset(out.c_str(), &report));
      const json r = json::parse(take(report));
      if (!r.at("ok").get<bool>()) {
        std::cerr << r.dump(2) << "\n";
        return kExitFailure;
      }
      std::cerr << "validated " << r.at("records") << " records\n";
    } else if (*train) {
      const std::string text = config.empty() ? std::string() : read_text(config);
      const std::string out_dir = out.empty() ? "runs" : out;
      omniseg_train_options opt{};
      opt.data_root = data.c_str();
      opt.config_text = text.c_str();
      opt.out_dir = out_dir.c_str();
      std::string resume;
      if (!ckpt.empty()) {
        resume = resolve_checkpoint(ckpt, out_dir).string();
        opt.resume_checkpoint = resume.c_str();
      }
      opt.first_stage = first_stage;
      opt.override_seed = train_seed->count() > 0;
      opt.seed = seed;
      opt.preset = train_preset->count() > 0 ? preset.c_str() : nullptr;
      char* summary = nullptr;
      check(omniseg_train(&opt, &summary));
      print_json(take(summary));
    } else if (*eval) {
      Model m;
      open_model(m, ckpt, run_dir, preset, seed);
      char* report = nullptr;
      check(omniseg_evaluate(m.get(), data.c_str(), split.c_str(),
                             prompt_kind.empty() ? nullptr : prompt_kind.c_str(), limit,
                             out.empty() ? nullptr : out.c_str(), &report));
      print_json(take(report));
    } else if (*grad) {
      char* report = nullptr;
      check(omniseg_gradcheck(seed, &report));
      const json r = json::parse(take(report));
      std::cout << r.dump(2) << "\n";
      return r.at("passed").get<bool>() ? 0 : kExitFailure;
    } else if (*infer) {
      const std::string body = !request.empty() && request[0] == '@' ? read_text(request.substr(1))
                                                                      : request;
      Model m;
      open_model(m, ckpt, run_dir, preset, seed);
      omniseg_service* svc = nullptr;
      check(omniseg_service_create(m.get(), data.c_str(), &svc));
      char* response = nullptr;
      const omniseg_status s = omniseg_service_segment(svc, body.c_str(), &response);
      omniseg_service_free(svc);
      check(s);
      print_json(take(response));
    } else if (*serve) {
      Model m;
      open_model(m, ckpt, run_dir, preset, seed);
      omniseg_service* svc = nullptr;
      check(omniseg_service_create(m.get(), data.c_str(), &svc));
      int bound = 0;
      const omniseg_status s = omniseg_server_start(svc, host.c_str(), port, &g_server, &bound);
      if (s != OMNISEG_OK) {
        omniseg_service_free(svc);
        check(s);
      }
      std::cerr << "listening on http://" << host << ":" << bound << "\n";
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      omniseg_server_wait(g_server);
      omniseg_server_free(g_server);
      g_server = nullptr;
      omniseg_service_free(svc);
    }
  } catch (const CliError& e) {
    std::cerr << "error (" << omniseg_status_name(e.status) << "): " << e.message << "\n";
    return e.status == OMNISEG_ERR_USAGE ? kExitUsage : kExitFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return 0;
}
