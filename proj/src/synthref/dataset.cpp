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

#include "synthref/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>

#include "common/error.hpp"
#include "common/rng.hpp"
#include "maskgeo/mask_json.hpp"
#include "synthref/image_io.hpp"

namespace omniseg::synth {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum Stream : std::uint64_t {
  kTrainReferences = 1,
  kTestReferences = 2,
  kTrainScenes = 3,
  kTestScenes = 4,
};

constexpr PromptKind kKinds[] = {PromptKind::kMask, PromptKind::kBox,
                                 PromptKind::kScribble};
constexpr Multiplicity kWants[] = {Multiplicity::kSingle, Multiplicity::kMulti,
                                   Multiplicity::kNone};

std::string padded(int v, int width) {
  std::string s = std::to_string(v);
  return std::string(std::max(0, width - static_cast<int>(s.size())), '0') + s;
}

std::string image_path(const std::string& scene_id) {
  return "images/" + scene_id + ".png";
}

std::string size_class_name(SizeClass s) {
  return s == SizeClass::kSmall ? "small" : "large";
}

std::string position_class_name(PositionClass p) {
  switch (p) {
    case PositionClass::kLeft: return "left";
    case PositionClass::kCenter: return "center";
    case PositionClass::kRight: return "right";
  }
  return "";
}

mask::ScribbleStyle parse_style(const std::string& s) {
  if (s == "lines") return mask::ScribbleStyle::kLines;
  if (s == "dots") return mask::ScribbleStyle::kDots;
  fail(ErrorKind::kFormat, "unknown scribble style: " + s);
}

json scene_to_json(const StoredScene& s) {
  json objects = json::array();
  for (const auto& o : s.scene.objects) {
    objects.push_back({{"category", category_name(o.category)},
                       {"rle", mask::rle_to_json(mask::rle_encode(o.mask))},
                       {"center_x", o.center_x},
                       {"center_y", o.center_y},
                       {"radius", o.radius},
                       {"size_class", size_class_name(o.size_class)},
                       {"position_class", position_class_name(o.position_class)}});
  }
  return {{"id", s.id},          {"image", s.image},
          {"seed", s.scene.seed}, {"height", s.scene.height},
          {"width", s.scene.width}, {"objects", objects}};
}

StoredScene scene_from_json(const json& j) {
  StoredScene s;
  s.id = j.at("id").get<std::string>();
  s.image = j.at("image").get<std::string>();
  s.scene.seed = j.at("seed").get<std::uint64_t>();
  s.scene.height = j.at("height").get<int>();
  s.scene.width = j.at("width").get<int>();
  for (const auto& o : j.at("objects")) {
    SceneObject obj;
    const auto cat = parse_category(o.at("category").get<std::string>());
    require(cat.has_value(), ErrorKind::kFormat, "bad category in scene " + s.id);
    obj.category = *cat;
    obj.mask = mask::rle_decode(mask::rle_from_json(o.at("rle")));
    obj.center_x = o.at("center_x").get<double>();
    obj.center_y = o.at("center_y").get<double>();
    obj.radius = o.at("radius").get<double>();
    const auto size = o.at("size_class").get<std::string>();
    obj.size_class = size == "small" ? SizeClass::kSmall : SizeClass::kLarge;
    const auto pos = o.at("position_class").get<std::string>();
    obj.position_class = pos == "left"    ? PositionClass::kLeft
                         : pos == "right" ? PositionClass::kRight
                                          : PositionClass::kCenter;
    s.scene.objects.push_back(std::move(obj));
  }
  return s;
}

std::vector<json> read_jsonl(const fs::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::kNotFound, "cannot open " + path.string());
  std::vector<json> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception& e) {
      fail(ErrorKind::kFormat, path.string() + ":" + std::to_string(lineno) +
                                   ": " + e.what());
    }
  }
  return out;
}

// Tracks written files so a failed build can be rolled back.
class Writer {
 public:
  explicit Writer(fs::path root) : root_(std::move(root)) {}

  void text(const std::string& rel, const std::string& content) {
    const fs::path p = root_ / rel;
    files_.push_back(p);
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    require(out.good(), ErrorKind::kIo, "cannot write " + p.string());
    out << content;
    out.flush();
    require(out.good(), ErrorKind::kIo, "write failed for " + p.string());
  }

  void png(const std::string& rel, const Scene& scene) {
    const fs::path p = root_ / rel;
    files_.push_back(p);
    write_png(p, RgbImage{scene.height, scene.width, scene.rgb});
  }

  void rollback() {
    std::error_code ec;
    for (const auto& f : files_) fs::remove(f, ec);
    files_.clear();
  }

  const std::vector<fs::path>& files() const { return files_; }

 private:
  fs::path root_;
  std::vector<fs::path> files_;
};

struct Built {
  OmniSample sample;
  const Scene* scene = nullptr;
  std::string scene_id;
  bool test_pool = false;
};

// Draws scenes under `base` until `make` succeeds on one that `accept`s.
template <typename Make>
std::pair<Scene, OmniSample> first_success(
    const DatasetConfig& cfg, std::uint64_t base,
    const std::function<bool(const Scene&)>& accept, Make make) {
  for (int attempt = 0; attempt < cfg.max_attempts; ++attempt) {
    const std::uint64_t scene_seed = derive_seed(base, attempt);
    Scene scene = generate_scene(scene_seed, cfg.scene);
    if (!accept(scene)) continue;
    std::mt19937_64 rng(derive_seed(scene_seed, 1));
    try {
      OmniSample s = make(scene, rng);
      return {std::move(scene), std::move(s)};
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kUnavailable) throw;
    }
  }
  fail(ErrorKind::kUnavailable,
       "no acceptable scene found within " + std::to_string(cfg.max_attempts) +
           " attempts");
}

OmniSample omni_sample(const Scene& target, const ReferencePool& pool,
                       Multiplicity want, PromptKind kind, std::mt19937_64& rng) {
  if (want == Multiplicity::kNone) {
    auto text = annotate_text(target, Multiplicity::kNone, rng);
    auto visual = pair_visual(target, pool, Multiplicity::kNone, kind, rng);
    auto m = merge_omni(target, text, visual);
    require(m.sample.has_value(), ErrorKind::kUnavailable, m.rejection);
    return *m.sample;
  }
  if (want == Multiplicity::kSingle) {
    auto visual = pair_visual(target, pool, Multiplicity::kSingle, kind, rng);
    std::vector<Referring> same;
    for (auto& r : enumerate_expressions(target))
      if (r.referents == visual.referents) same.push_back(std::move(r));
    require(!same.empty(), ErrorKind::kUnavailable,
            "no expression names the visual referent");
    const auto& r = same[std::uniform_int_distribution<std::size_t>(
        0, same.size() - 1)(rng)];
    auto m = merge_omni(target, make_text_prompt(r), visual);
    require(m.sample.has_value(), ErrorKind::kUnavailable, m.rejection);
    return *m.sample;
  }
  for (int tries = 0; tries < 16; ++tries) {
    std::bernoulli_distribution coin(0.5);
    const auto tw = coin(rng) ? Multiplicity::kMulti : Multiplicity::kSingle;
    const auto vw = coin(rng) ? Multiplicity::kMulti : Multiplicity::kSingle;
    try {
      auto text = annotate_text(target, tw, rng);
      auto visual = pair_visual(target, pool, vw, kind, rng);
      auto m = merge_omni(target, text, visual);
      if (m.sample && m.sample->case_label == CaseLabel::kManyVsMany)
        return *m.sample;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kUnavailable) throw;
    }
  }
  fail(ErrorKind::kUnavailable, "no accepted many_vs_many merge");
}

ManifestRecord to_record(const std::string& id, const std::string& split,
                         const std::string& scene_id, const OmniSample& s,
                         const std::vector<std::string>& ref_ids) {
  ManifestRecord r;
  r.id = id;
  r.split = split;
  r.scene = scene_id;
  r.target_image = image_path(scene_id);
  if (s.text) {
    r.text = s.text->text;
    r.text_tokens = s.text->tokens;
  }
  if (s.visual) {
    VisualRecord v;
    v.ref_scene = ref_ids.at(s.visual->reference);
    v.ref_image = image_path(v.ref_scene);
    v.ref_object = s.visual->reference_object;
    v.category = category_name(s.visual->category);
    v.kind = s.visual->kind;
    v.style = s.visual->style;
    v.scribble_seed = s.visual->scribble_seed;
    v.prompt = mask::rle_encode(s.visual->prompt);
    v.instance = mask::rle_encode(s.visual->instance);
    r.visual = v;
  }
  for (const auto& g : s.gt) r.gt.push_back({g.source, mask::rle_encode(g.mask)});
  r.exists = s.exists;
  r.case_label = s.case_label;
  return r;
}

std::string modality(const ManifestRecord& r) {
  if (r.text && r.visual) return "omni";
  return r.text ? "text" : "visual";
}

void tally(SplitStats& st, const ManifestRecord& r) {
  ++st.samples;
  ++st.cases[case_name(r.case_label)];
  ++st.modalities[modality(r)];
}

json stats_to_json(const SplitStats& s) {
  return {{"samples", s.samples}, {"cases", s.cases}, {"modalities", s.modalities}};
}

bool has_unique_and_repeated(const Scene& s) {
  bool unique = false, repeated = false;
  for (const auto& o : s.objects) {
    const int n = s.count(o.category);
    unique |= n == 1;
    repeated |= n >= 2;
  }
  return unique && repeated;
}

ReferencePool make_pool(const DatasetConfig& cfg, Stream stream, int n) {
  std::vector<Scene> scenes;
  for (int i = 0; i < n; ++i)
    scenes.push_back(generate_scene(derive_seed(cfg.seed, stream, i), cfg.scene));
  return ReferencePool(std::move(scenes));
}

}  // namespace

json config_to_json(const DatasetConfig& c) {
  const auto& s = c.scene;
  return {{"seed", c.seed},
          {"train_samples", c.train_samples},
          {"text_fraction", c.text_fraction},
          {"visual_fraction", c.visual_fraction},
          {"test_scenes", c.test_scenes},
          {"train_reference_scenes", c.train_reference_scenes},
          {"test_reference_scenes", c.test_reference_scenes},
          {"max_attempts", c.max_attempts},
          {"scene",
           {{"height", s.height},
            {"width", s.width},
            {"min_objects", s.min_objects},
            {"max_objects", s.max_objects},
            {"min_radius", s.min_radius},
            {"max_radius", s.max_radius},
            {"min_centroid_gap", s.min_centroid_gap},
            {"repeat_probability", s.repeat_probability},
            {"max_retries", s.max_retries},
            {"category_pool", s.category_pool}}}};
}

DatasetConfig config_from_json(const json& j) {
  DatasetConfig c;
  c.seed = j.at("seed").get<std::uint64_t>();
  c.train_samples = j.at("train_samples").get<int>();
  c.text_fraction = j.at("text_fraction").get<double>();
  c.visual_fraction = j.at("visual_fraction").get<double>();
  c.test_scenes = j.at("test_scenes").get<int>();
  c.train_reference_scenes = j.at("train_reference_scenes").get<int>();
  c.test_reference_scenes = j.at("test_reference_scenes").get<int>();
  c.max_attempts = j.at("max_attempts").get<int>();
  const auto& s = j.at("scene");
  c.scene.height = s.at("height").get<int>();
  c.scene.width = s.at("width").get<int>();
  c.scene.min_objects = s.at("min_objects").get<int>();
  c.scene.max_objects = s.at("max_objects").get<int>();
  c.scene.min_radius = s.at("min_radius").get<double>();
  c.scene.max_radius = s.at("max_radius").get<double>();
  c.scene.min_centroid_gap = s.at("min_centroid_gap").get<double>();
  c.scene.repeat_probability = s.at("repeat_probability").get<double>();
  c.scene.max_retries = s.at("max_retries").get<int>();
  c.scene.category_pool = s.at("category_pool").get<std::vector<int>>();
  return c;
}

json record_to_json(const ManifestRecord& r) {
  json j = {{"id", r.id},
            {"split", r.split},
            {"scene", r.scene},
            {"target_image", r.target_image},
            {"exists", r.exists},
            {"case", case_name(r.case_label)}};
  if (r.text) {
    j["text"] = *r.text;
    j["text_tokens"] = r.text_tokens;
  }
  if (r.visual) {
    const auto& v = *r.visual;
    j["visual"] = {{"ref_scene", v.ref_scene},
                   {"ref_image", v.ref_image},
                   {"ref_object", v.ref_object},
                   {"category", v.category},
                   {"kind", prompt_kind_name(v.kind)},
                   {"style", mask::scribble_style_name(v.style)},
                   {"scribble_seed", v.scribble_seed},
                   {"prompt_rle", mask::rle_to_json(v.prompt)},
                   {"instance_rle", mask::rle_to_json(v.instance)}};
  }
  json gt = json::array();
  for (const auto& g : r.gt)
    gt.push_back({{"source", source_name(g.source)}, {"rle", mask::rle_to_json(g.mask)}});
  j["gt"] = gt;
  return j;
}

ManifestRecord record_from_json(const json& j) {
  try {
    ManifestRecord r;
    r.id = j.at("id").get<std::string>();
    r.split = j.at("split").get<std::string>();
    r.scene = j.at("scene").get<std::string>();
    r.target_image = j.at("target_image").get<std::string>();
    r.exists = j.at("exists").get<bool>();
    r.case_label = parse_case(j.at("case").get<std::string>());
    if (j.contains("text")) {
      r.text = j.at("text").get<std::string>();
      r.text_tokens = j.at("text_tokens").get<std::vector<int>>();
    }
    if (j.contains("visual")) {
      const auto& jv = j.at("visual");
      VisualRecord v;
      v.ref_scene = jv.at("ref_scene").get<std::string>();
      v.ref_image = jv.at("ref_image").get<std::string>();
      v.ref_object = jv.at("ref_object").get<int>();
      v.category = jv.at("category").get<std::string>();
      v.kind = parse_prompt_kind(jv.at("kind").get<std::string>());
      v.style = parse_style(jv.at("style").get<std::string>());
      v.scribble_seed = jv.at("scribble_seed").get<std::uint64_t>();
      v.prompt = mask::rle_from_json(jv.at("prompt_rle"));
      v.instance = mask::rle_from_json(jv.at("instance_rle"));
      r.visual = v;
    }
    for (const auto& g : j.at("gt"))
      r.gt.push_back({parse_source(g.at("source").get<std::string>()),
                      mask::rle_from_json(g.at("rle"))});
    return r;
  } catch (const json::exception& e) {
    fail(ErrorKind::kFormat, std::string("malformed manifest record: ") + e.what());
  }
}

DatasetSummary build_dataset(const DatasetConfig& cfg, const fs::path& out) {
  require(cfg.test_scenes >= 10, ErrorKind::kConfig,
          "test splits need at least 30 samples (10 scenes)");
  require(cfg.train_samples >= 3, ErrorKind::kConfig, "train_samples must be >= 3");
  require(cfg.text_fraction >= 0 && cfg.visual_fraction >= 0 &&
              cfg.text_fraction + cfg.visual_fraction <= 1.0,
          ErrorKind::kConfig, "modality fractions must be nonnegative and sum to <= 1");
  require(cfg.train_reference_scenes >= 1 && cfg.test_reference_scenes >= 1,
          ErrorKind::kConfig, "reference pools must be nonempty");
  require(cfg.max_attempts >= 1, ErrorKind::kConfig, "max_attempts must be >= 1");

  const ReferencePool train_pool =
      make_pool(cfg, kTrainReferences, cfg.train_reference_scenes);
  const ReferencePool test_pool =
      make_pool(cfg, kTestReferences, cfg.test_reference_scenes);
  std::vector<std::string> train_ref_ids, test_ref_ids;
  for (int i = 0; i < cfg.train_reference_scenes; ++i)
    train_ref_ids.push_back("ref-train-" + padded(i, 4));
  for (int i = 0; i < cfg.test_reference_scenes; ++i)
    test_ref_ids.push_back("ref-test-" + padded(i, 4));

  std::vector<StoredScene> scenes;
  std::map<std::string, std::vector<ManifestRecord>> manifests;

  const int n_text = static_cast<int>(cfg.train_samples * cfg.text_fraction);
  const int n_visual = static_cast<int>(cfg.train_samples * cfg.visual_fraction);
  const auto any_target = [](const Scene& s) { return is_target_scene(s); };
  for (int i = 0; i < cfg.train_samples; ++i) {
    const Multiplicity want = kWants[i % 3];
    const std::uint64_t base = derive_seed(cfg.seed, kTrainScenes, i);
    auto [scene, sample] = first_success(
        cfg, base, any_target, [&](const Scene& t, std::mt19937_64& rng) {
          const PromptKind kind =
              kKinds[std::uniform_int_distribution<int>(0, 2)(rng)];
          if (i < n_text) return text_sample(t, annotate_text(t, want, rng));
          if (i < n_text + n_visual)
            return visual_sample(t, pair_visual(t, train_pool, want, kind, rng));
          return omni_sample(t, train_pool, want, kind, rng);
        });
    const std::string sid = "train-" + padded(i, 5);
    manifests[kTrainSplit].push_back(to_record(
        std::string(kTrainSplit) + "-" + padded(i, 5), kTrainSplit, sid, sample,
        train_ref_ids));
    scenes.push_back({sid, image_path(sid), std::move(scene)});
  }

  const auto test_target = [](const Scene& s) {
    return is_target_scene(s) && has_unique_and_repeated(s);
  };
  for (int j = 0; j < cfg.test_scenes; ++j) {
    std::vector<OmniSample> built;
    auto [scene, first] = first_success(
        cfg, derive_seed(cfg.seed, kTestScenes, j), test_target,
        [&](const Scene& t, std::mt19937_64& rng) {
          built.clear();
          for (int k = 0; k < 3; ++k)
            built.push_back(text_sample(t, annotate_text(t, kWants[k], rng)));
          for (int k = 0; k < 3; ++k)
            built.push_back(visual_sample(
                t, pair_visual(t, test_pool, kWants[k], kKinds[(j + k) % 3], rng)));
          for (int k = 0; k < 3; ++k)
            built.push_back(
                omni_sample(t, test_pool, kWants[k], kKinds[(j + k + 1) % 3], rng));
          return built.front();
        });
    (void)first;
    const std::string sid = "test-" + padded(j, 4);
    for (int s = 0; s < 3; ++s) {
      const std::string& split = kSplitNames[s + 1];
      for (int k = 0; k < 3; ++k)
        manifests[split].push_back(to_record(split + "-" + padded(j * 3 + k, 5),
                                             split, sid, built[s * 3 + k],
                                             test_ref_ids));
    }
    scenes.push_back({sid, image_path(sid), std::move(scene)});
  }
  for (int i = 0; i < cfg.train_reference_scenes; ++i)
    scenes.push_back({train_ref_ids[i], image_path(train_ref_ids[i]),
                      train_pool.scenes()[i]});
  for (int i = 0; i < cfg.test_reference_scenes; ++i)
    scenes.push_back({test_ref_ids[i], image_path(test_ref_ids[i]),
                      test_pool.scenes()[i]});

  DatasetSummary summary;
  summary.scenes = static_cast<int>(scenes.size());
  std::error_code ec;
  fs::create_directories(out / "images", ec);
  require(!ec, ErrorKind::kIo, "cannot create " + (out / "images").string());
  Writer w(out);
  try {
    std::string scene_lines;
    for (const auto& s : scenes) {
      w.png(s.image, s.scene);
      scene_lines += scene_to_json(s).dump() + "\n";
    }
    w.text("scenes.jsonl", scene_lines);
    json splits = json::object();
    for (const auto& name : kSplitNames) {
      std::string lines;
      SplitStats st;
      for (const auto& r : manifests[name]) {
        lines += record_to_json(r).dump() + "\n";
        tally(st, r);
      }
      w.text(name + ".jsonl", lines);
      splits[name] = stats_to_json(st);
      summary.splits[name] = st;
    }
    w.text("vocab.json", json(Vocabulary::standard().words()).dump(1) + "\n");
    json stats = {{"config", config_to_json(cfg)},
                  {"splits", splits},
                  {"scenes", summary.scenes},
                  {"vocab_size", Vocabulary::standard().size()}};
    w.text("stats.json", stats.dump(2) + "\n");
  } catch (...) {
    w.rollback();
    throw;
  }
  summary.files = w.files();
  return summary;
}

std::vector<ManifestRecord> load_manifest(const fs::path& root,
                                          const std::string& split) {
  require(std::find(kSplitNames.begin(), kSplitNames.end(), split) !=
              kSplitNames.end(),
          ErrorKind::kInvalidArgument, "unknown split: " + split);
  std::vector<ManifestRecord> out;
  for (const auto& j : read_jsonl(root / (split + ".jsonl")))
    out.push_back(record_from_json(j));
  return out;
}

std::vector<StoredScene> load_scenes(const fs::path& root) {
  std::vector<StoredScene> out;
  for (const auto& j : read_jsonl(root / "scenes.jsonl")) {
    try {
      out.push_back(scene_from_json(j));
    } catch (const json::exception& e) {
      fail(ErrorKind::kFormat, std::string("malformed scene record: ") + e.what());
    }
  }
  return out;
}

DatasetConfig load_dataset_config(const fs::path& root) {
  std::ifstream in(root / "stats.json");
  require(in.good(), ErrorKind::kNotFound, "cannot open " + (root / "stats.json").string());
  try {
    return config_from_json(json::parse(in).at("config"));
  } catch (const json::exception& e) {
    fail(ErrorKind::kFormat, std::string("malformed stats.json: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Validator

namespace {

class Checker {
 public:
  explicit Checker(std::vector<std::string>& sink) : sink_(sink) {}
  void expect(bool ok, const std::string& where, const std::string& what) {
    if (!ok) sink_.push_back(where + ": " + what);
  }

 private:
  std::vector<std::string>& sink_;
};

// Objects whose masks make up `m` exactly; nullopt when `m` is not a union
// of whole objects.
std::optional<std::vector<int>> decompose(const mask::BinaryMask& m,
                                          const Scene& scene) {
  std::vector<int> parts;
  mask::BinaryMask rebuilt(scene.height, scene.width);
  for (int i = 0; i < static_cast<int>(scene.objects.size()); ++i) {
    const auto& om = scene.objects[i].mask;
    const std::size_t inside = (om & m).count();
    if (inside == 0) continue;
    if (inside != om.count()) return std::nullopt;
    parts.push_back(i);
    rebuilt = rebuilt | om;
  }
  if (!(rebuilt == m)) return std::nullopt;
  return parts;
}

int single_multi_none(CaseLabel c) {
  switch (c) {
    case CaseLabel::kOneVsOne:
    case CaseLabel::kManyVsOne: return 0;
    case CaseLabel::kOneVsMany:
    case CaseLabel::kManyVsMany: return 1;
    case CaseLabel::kNoTarget: return 2;
  }
  return 2;
}

}  // namespace

ValidationReport validate_dataset(const fs::path& root) {
  ValidationReport report;
  Checker check(report.violations);
  const DatasetConfig cfg = load_dataset_config(root);
  const auto& vocab = Vocabulary::standard();

  {
    std::ifstream in(root / "vocab.json");
    check.expect(in.good() && json::parse(in).get<std::vector<std::string>>() ==
                                  vocab.words(),
                 "vocab.json", "does not match the template vocabulary");
  }

  std::map<std::string, StoredScene> scenes;
  for (auto& s : load_scenes(root)) {
    const std::string where = "scene " + s.id;
    ++report.scenes;
    const fs::path img = root / s.image;
    if (!fs::exists(img)) {
      check.expect(false, where, "missing image " + s.image);
    } else {
      const Scene regen = generate_scene(s.scene.seed, cfg.scene);
      const RgbImage stored = read_png(img);
      check.expect(stored.rgb == regen.rgb, where,
                   "image differs from the scene rendered from its seed");
      bool same = regen.objects.size() == s.scene.objects.size();
      for (std::size_t i = 0; same && i < regen.objects.size(); ++i)
        same = regen.objects[i].category == s.scene.objects[i].category &&
               regen.objects[i].mask == s.scene.objects[i].mask;
      check.expect(same, where, "objects differ from the regenerated scene");
    }
    const auto& objs = s.scene.objects;
    for (std::size_t a = 0; a < objs.size(); ++a) {
      check.expect(!objs[a].mask.empty_region(), where, "empty object mask");
      for (std::size_t b = a + 1; b < objs.size(); ++b)
        check.expect((objs[a].mask & objs[b].mask).empty_region(), where,
                     "overlapping object masks");
    }
    scenes.emplace(s.id, std::move(s));
  }

  std::ifstream stats_in(root / "stats.json");
  const json stats = json::parse(stats_in);
  std::set<std::string> ids;
  std::map<std::string, std::set<std::string>> test_scenes;
  for (const auto& split : kSplitNames) {
    const auto records = load_manifest(root, split);
    SplitStats st;
    std::array<int, 3> outcome{};
    for (const auto& r : records) {
      ++report.records;
      tally(st, r);
      ++outcome[single_multi_none(r.case_label)];
      const std::string where = split + "/" + r.id;
      check.expect(ids.insert(r.id).second, where, "duplicate id");
      check.expect(r.split == split, where, "split field mismatch");
      if (split != kTrainSplit) test_scenes[split].insert(r.scene);
      const auto sit = scenes.find(r.scene);
      if (sit == scenes.end()) {
        check.expect(false, where, "unknown scene " + r.scene);
        continue;
      }
      const Scene& target = sit->second.scene;
      check.expect(r.target_image == sit->second.image &&
                       fs::exists(root / r.target_image),
                   where, "target image missing or mismatched");
      check.expect(r.text || r.visual, where, "no prompt present");
      const std::size_t sources = (r.text ? 1 : 0) + (r.visual ? 1 : 0);
      check.expect(r.gt.size() == sources, where, "gt count differs from prompt count");
      if (r.gt.size() != sources) continue;
      if (r.text) check.expect(r.gt.front().source == Source::kText, where, "gt order");
      if (r.visual) check.expect(r.gt.back().source == Source::kVisual, where, "gt order");

      std::vector<std::vector<int>> referents;
      mask::BinaryMask all(target.height, target.width);
      bool decomposed = true;
      for (const auto& g : r.gt) {
        const auto m = mask::rle_decode(g.mask);
        if (m.height() != target.height || m.width() != target.width) {
          check.expect(false, where, "gt extent differs from target");
          decomposed = false;
          continue;
        }
        all = all | m;
        const auto parts = decompose(m, target);
        check.expect(parts.has_value(), where,
                     "gt is not a union of whole target objects");
        if (parts) referents.push_back(*parts);
        else decomposed = false;
      }
      check.expect(r.exists == !all.empty_region(), where,
                   "exists flag disagrees with gt");

      if (r.text) {
        bool vocab_ok = true;
        try {
          check.expect(vocab.encode(*r.text, false) == r.text_tokens, where,
                       "tokens do not encode the text");
        } catch (const Error&) {
          vocab_ok = false;
        }
        check.expect(vocab_ok, where, "text uses words outside the vocabulary");
      }
      if (r.visual) {
        const auto& v = *r.visual;
        const auto rit = scenes.find(v.ref_scene);
        const auto cat = parse_category(v.category);
        check.expect(cat.has_value(), where, "bad visual category");
        if (rit == scenes.end() || !cat) {
          check.expect(false, where, "unknown reference scene " + v.ref_scene);
        } else {
          const Scene& ref = rit->second.scene;
          check.expect(v.ref_image == rit->second.image, where, "reference image mismatch");
          const bool obj_ok =
              v.ref_object >= 0 && v.ref_object < static_cast<int>(ref.objects.size());
          check.expect(obj_ok, where, "reference object out of range");
          if (obj_ok) {
            const auto& obj = ref.objects[v.ref_object];
            const auto instance = mask::rle_decode(v.instance);
            const auto prompt = mask::rle_decode(v.prompt);
            check.expect(obj.category == *cat, where, "reference category mismatch");
            check.expect(instance == obj.mask, where, "instance mask mismatch");
            switch (v.kind) {
              case PromptKind::kMask:
                check.expect(prompt == instance, where, "mask prompt != instance");
                break;
              case PromptKind::kBox:
                check.expect(prompt == make_spatial_prompt(instance, v.kind, 0, v.style),
                             where, "box prompt is not the tight instance box");
                break;
              case PromptKind::kScribble:
                check.expect(!prompt.empty_region() &&
                                 (prompt & ~instance).empty_region(),
                             where, "scribble escapes the instance mask");
                check.expect(prompt == make_spatial_prompt(instance, v.kind,
                                                           v.scribble_seed, v.style),
                             where, "scribble does not reproduce from its seed");
                break;
            }
            std::vector<int> expected;
            for (int i = 0; i < static_cast<int>(target.objects.size()); ++i)
              if (target.objects[i].category == *cat) expected.push_back(i);
            if (decomposed)
              check.expect(referents.back() == expected, where,
                           "visual gt is not every target instance of the category");
          }
        }
      }

      if (!decomposed) continue;
      std::set<int> union_refs;
      for (const auto& p : referents) union_refs.insert(p.begin(), p.end());
      CaseLabel expected_case;
      if (sources == 1) {
        expected_case = union_refs.empty()       ? CaseLabel::kNoTarget
                        : union_refs.size() == 1 ? CaseLabel::kOneVsOne
                                                 : CaseLabel::kOneVsMany;
      } else {
        check.expect(referents[0].empty() == referents[1].empty(), where,
                     "omni prompts disagree on existence");
        expected_case = union_refs.empty()       ? CaseLabel::kNoTarget
                        : union_refs.size() == 1 ? CaseLabel::kManyVsOne
                                                 : CaseLabel::kManyVsMany;
        std::set<int> tc, vc;
        for (int i : referents[0]) tc.insert(target.objects[i].category.index());
        for (int i : referents[1]) vc.insert(target.objects[i].category.index());
        for (int ci : tc) {
          if (!vc.count(ci)) continue;
          int covered = 0;
          for (int i : union_refs)
            covered += target.objects[i].category.index() == ci;
          check.expect(covered == target.count(Category::from_index(ci)), where,
                       "shared category not jointly covered");
        }
      }
      check.expect(r.case_label == expected_case, where,
                   "case label " + case_name(r.case_label) + " should be " +
                       case_name(expected_case));
    }

    const json& js = stats.at("splits").at(split);
    check.expect(js == stats_to_json(st), "stats.json",
                 "counts for " + split + " do not match the manifest");
    if (st.samples > 0) {
      const auto [lo, hi] = std::minmax_element(outcome.begin(), outcome.end());
      check.expect(*hi <= 1.1 * *lo, split,
                   "single/multi/no-target counts differ by more than 10%");
    }
  }
  for (const auto& split : kSplitNames) {
    if (split == kTrainSplit) continue;
    check.expect(test_scenes[split] == test_scenes[kSplitNames[1]], split,
                 "test splits do not share the same target scenes");
  }
  return report;
}

}  // namespace omniseg::synth
