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

#include "synthref/sample.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "common/error.hpp"

namespace omniseg::synth {
namespace {

template <typename T>
const T& pick(const std::vector<T>& items, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> d(0, items.size() - 1);
  return items[d(rng)];
}

bool multiplicity_matches(std::size_t n, Multiplicity want) {
  switch (want) {
    case Multiplicity::kSingle: return n == 1;
    case Multiplicity::kMulti: return n >= 2;
    case Multiplicity::kNone: return n == 0;
  }
  return false;
}

CaseLabel unimodal_case(std::size_t referents) {
  if (referents == 0) return CaseLabel::kNoTarget;
  return referents == 1 ? CaseLabel::kOneVsOne : CaseLabel::kOneVsMany;
}

}  // namespace

std::string case_name(CaseLabel c) {
  switch (c) {
    case CaseLabel::kOneVsOne: return "one_vs_one";
    case CaseLabel::kOneVsMany: return "one_vs_many";
    case CaseLabel::kManyVsOne: return "many_vs_one";
    case CaseLabel::kManyVsMany: return "many_vs_many";
    case CaseLabel::kNoTarget: return "no_target";
  }
  return "";
}

CaseLabel parse_case(const std::string& s) {
  for (auto c : {CaseLabel::kOneVsOne, CaseLabel::kOneVsMany,
                 CaseLabel::kManyVsOne, CaseLabel::kManyVsMany,
                 CaseLabel::kNoTarget})
    if (case_name(c) == s) return c;
  fail(ErrorKind::kFormat, "unknown case label: " + s);
}

std::string prompt_kind_name(PromptKind k) {
  switch (k) {
    case PromptKind::kMask: return "mask";
    case PromptKind::kBox: return "box";
    case PromptKind::kScribble: return "scribble";
  }
  return "";
}

PromptKind parse_prompt_kind(const std::string& s) {
  for (auto k : {PromptKind::kMask, PromptKind::kBox, PromptKind::kScribble})
    if (prompt_kind_name(k) == s) return k;
  fail(ErrorKind::kFormat, "unknown prompt kind: " + s);
}

std::string source_name(Source s) {
  return s == Source::kText ? "text" : "visual";
}

Source parse_source(const std::string& s) {
  if (s == "text") return Source::kText;
  if (s == "visual") return Source::kVisual;
  fail(ErrorKind::kFormat, "unknown prompt source: " + s);
}

ReferencePool::ReferencePool(std::vector<Scene> scenes)
    : scenes_(std::move(scenes)), by_category_(kNumCategories) {
  for (int s = 0; s < static_cast<int>(scenes_.size()); ++s)
    for (int o = 0; o < static_cast<int>(scenes_[s].objects.size()); ++o)
      by_category_[scenes_[s].objects[o].category.index()].emplace_back(s, o);
}

mask::BinaryMask union_of(const Scene& scene, const std::vector<int>& objects) {
  mask::BinaryMask m(scene.height, scene.width);
  for (int i : objects) m = m | scene.objects.at(i).mask;
  return m;
}

mask::BinaryMask make_spatial_prompt(const mask::BinaryMask& instance,
                                     PromptKind kind, std::uint64_t seed,
                                     mask::ScribbleStyle style) {
  switch (kind) {
    case PromptKind::kMask:
      return instance;
    case PromptKind::kBox:
      return mask::rasterize_box(mask::box_from_mask(instance), instance.height(),
                                 instance.width());
    case PromptKind::kScribble:
      return mask::scribble_from_mask(instance, seed, style);
  }
  return instance;
}

TextPrompt make_text_prompt(const Referring& r) {
  TextPrompt t;
  t.expression = r.expression;
  t.text = r.expression.text();
  t.tokens = Vocabulary::standard().encode(t.text, false);
  t.referents = r.referents;
  return t;
}

TextPrompt annotate_text(const Scene& target, Multiplicity want,
                         std::mt19937_64& rng) {
  // Choose the template first so that templates with many instantiations
  // (pairs) do not crowd out the rest.
  std::map<TemplateKind, std::vector<Referring>> by_template;
  for (auto& r : enumerate_expressions(target))
    if (multiplicity_matches(r.referents.size(), want))
      by_template[r.expression.kind].push_back(std::move(r));
  require(!by_template.empty(), ErrorKind::kUnavailable,
          "scene admits no expression with the requested referent count");
  std::vector<TemplateKind> kinds;
  for (const auto& [k, _] : by_template) kinds.push_back(k);
  const TemplateKind k = pick(kinds, rng);
  return make_text_prompt(pick(by_template[k], rng));
}

VisualPrompt pair_visual(const Scene& target, const ReferencePool& pool,
                         Multiplicity want, PromptKind kind,
                         std::mt19937_64& rng) {
  std::vector<int> eligible, similar;
  for (int ci = 0; ci < kNumCategories; ++ci) {
    const Category cat = Category::from_index(ci);
    if (pool.instances(cat).empty()) continue;
    const int n = target.count(cat);
    if (!multiplicity_matches(static_cast<std::size_t>(n), want)) continue;
    eligible.push_back(ci);
    if (want == Multiplicity::kNone) {
      for (const auto& o : target.objects)
        if (o.category.color == cat.color || o.category.shape == cat.shape) {
          similar.push_back(ci);
          break;
        }
    }
  }
  require(!eligible.empty(), ErrorKind::kUnavailable,
          "no reference instance is eligible for this pairing");
  const Category cat =
      Category::from_index(similar.empty() ? pick(eligible, rng) : pick(similar, rng));
  const auto [ref_scene, ref_object] = pick(pool.instances(cat), rng);

  VisualPrompt v;
  v.reference = ref_scene;
  v.reference_object = ref_object;
  v.category = cat;
  v.kind = kind;
  v.style = std::bernoulli_distribution(0.5)(rng) ? mask::ScribbleStyle::kDots
                                                  : mask::ScribbleStyle::kLines;
  v.scribble_seed = rng();
  v.instance = pool.scenes()[ref_scene].objects[ref_object].mask;
  v.prompt = make_spatial_prompt(v.instance, kind, v.scribble_seed, v.style);
  for (int i = 0; i < static_cast<int>(target.objects.size()); ++i)
    if (target.objects[i].category == cat) v.referents.push_back(i);
  return v;
}

OmniSample text_sample(const Scene& target, TextPrompt text) {
  OmniSample s;
  s.gt.push_back({Source::kText, union_of(target, text.referents)});
  s.exists = !text.referents.empty();
  s.case_label = unimodal_case(text.referents.size());
  s.text = std::move(text);
  return s;
}

OmniSample visual_sample(const Scene& target, VisualPrompt visual) {
  OmniSample s;
  s.gt.push_back({Source::kVisual, union_of(target, visual.referents)});
  s.exists = !visual.referents.empty();
  s.case_label = unimodal_case(visual.referents.size());
  s.visual = std::move(visual);
  return s;
}

MergeOutcome merge_omni(const Scene& target, const TextPrompt& text,
                        const VisualPrompt& visual) {
  MergeOutcome out;
  const bool text_hit = !text.referents.empty();
  const bool visual_hit = !visual.referents.empty();
  if (text_hit != visual_hit) {
    out.rejection = "prompts disagree on whether the target exists";
    return out;
  }
  std::set<int> all(text.referents.begin(), text.referents.end());
  all.insert(visual.referents.begin(), visual.referents.end());
  if (text_hit) {
    std::set<int> text_cats, visual_cats;
    for (int i : text.referents) text_cats.insert(target.objects.at(i).category.index());
    for (int i : visual.referents) visual_cats.insert(target.objects.at(i).category.index());
    for (int ci : text_cats) {
      if (!visual_cats.count(ci)) continue;
      const Category cat = Category::from_index(ci);
      int covered = 0;
      for (int i : all)
        if (target.objects[i].category == cat) ++covered;
      if (covered != target.count(cat)) {
        out.rejection = "prompts share " + category_name(cat) +
                        " without jointly covering all its instances";
        return out;
      }
    }
  }
  OmniSample s;
  s.text = text;
  s.visual = visual;
  s.gt.push_back({Source::kText, union_of(target, text.referents)});
  s.gt.push_back({Source::kVisual, union_of(target, visual.referents)});
  s.exists = text_hit;
  s.case_label = !text_hit          ? CaseLabel::kNoTarget
                 : all.size() == 1 ? CaseLabel::kManyVsOne
                                   : CaseLabel::kManyVsMany;
  out.sample = std::move(s);
  return out;
}

}  // namespace omniseg::synth
