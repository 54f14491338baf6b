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

// Referring samples: text and visual prompts over a target scene, the
// five referring cases, and the omni merge rules.

#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "maskgeo/mask.hpp"
#include "synthref/scene.hpp"
#include "synthref/text.hpp"

namespace omniseg::synth {

enum class CaseLabel { kOneVsOne, kOneVsMany, kManyVsOne, kManyVsMany, kNoTarget };
enum class PromptKind { kMask, kBox, kScribble };
enum class Source { kText, kVisual };
// Requested referent count for a unimodal prompt.
enum class Multiplicity { kSingle, kMulti, kNone };

std::string case_name(CaseLabel c);
CaseLabel parse_case(const std::string& s);
std::string prompt_kind_name(PromptKind k);
PromptKind parse_prompt_kind(const std::string& s);
std::string source_name(Source s);
Source parse_source(const std::string& s);

struct TextPrompt {
  Expression expression;
  std::string text;
  std::vector<int> tokens;     // padded to kMaxTextLength
  std::vector<int> referents;  // target object indices
};

struct VisualPrompt {
  int reference = -1;         // scene index in the reference pool
  int reference_object = -1;  // object index in that scene
  Category category;
  PromptKind kind = PromptKind::kMask;
  mask::ScribbleStyle style = mask::ScribbleStyle::kLines;
  std::uint64_t scribble_seed = 0;
  mask::BinaryMask instance;  // the reference object's mask
  mask::BinaryMask prompt;    // mask, box or scribble derived from it
  std::vector<int> referents;
};

struct GroundTruth {
  Source source = Source::kText;
  mask::BinaryMask mask;
};

struct OmniSample {
  std::optional<TextPrompt> text;
  std::optional<VisualPrompt> visual;
  std::vector<GroundTruth> gt;  // one per source present, text first
  bool exists = false;
  CaseLabel case_label = CaseLabel::kNoTarget;
};

// Reference scenes indexed by the categories they contain.
class ReferencePool {
 public:
  explicit ReferencePool(std::vector<Scene> scenes);

  const std::vector<Scene>& scenes() const { return scenes_; }
  // (scene index, object index) pairs of the given category.
  const std::vector<std::pair<int, int>>& instances(const Category& c) const {
    return by_category_[c.index()];
  }

 private:
  std::vector<Scene> scenes_;
  std::vector<std::vector<std::pair<int, int>>> by_category_;
};

mask::BinaryMask union_of(const Scene& scene, const std::vector<int>& objects);

mask::BinaryMask make_spatial_prompt(const mask::BinaryMask& instance,
                                     PromptKind kind, std::uint64_t seed,
                                     mask::ScribbleStyle style);

TextPrompt make_text_prompt(const Referring& r);

// Samples a templated expression with the requested referent count.
// Errors with kUnavailable when the scene admits none.
TextPrompt annotate_text(const Scene& target, Multiplicity want,
                         std::mt19937_64& rng);

// Single: a category unique in the target. Multi: every instance of a
// repeated category. None: a category absent from the target, preferring
// ones that share a colour or shape with something in it. Errors with
// kUnavailable when no reference instance is eligible.
VisualPrompt pair_visual(const Scene& target, const ReferencePool& pool,
                         Multiplicity want, PromptKind kind,
                         std::mt19937_64& rng);

OmniSample text_sample(const Scene& target, TextPrompt text);
OmniSample visual_sample(const Scene& target, VisualPrompt visual);

struct MergeOutcome {
  std::optional<OmniSample> sample;
  std::string rejection;  // set when sample is empty
};

// Both prompts must agree on existence. Prompts that touch a common
// category must jointly cover all of its instances. One referred instance
// in total gives many_vs_one, more gives many_vs_many.
MergeOutcome merge_omni(const Scene& target, const TextPrompt& text,
                        const VisualPrompt& visual);

}  // namespace omniseg::synth
