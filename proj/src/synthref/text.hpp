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

// Closed template vocabulary and the referring-expression templates used
// for text prompts.

#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "synthref/scene.hpp"

namespace omniseg::synth {

inline constexpr int kMaxTextLength = 20;

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;

  static const Vocabulary& standard();

  int size() const { return static_cast<int>(words_.size()); }
  const std::vector<std::string>& words() const { return words_; }
  const std::string& word(int id) const;
  // -1 when the word is not in the vocabulary.
  int find(const std::string& word) const;

  // Lower-cases and splits on anything that is not a letter.
  static std::vector<std::string> split_words(const std::string& text);

  // Token ids padded with kPad (or truncated) to `length`. Unknown words are
  // an error unless `allow_unknown`, in which case they become kUnk.
  std::vector<int> encode(const std::string& text, bool allow_unknown,
                          int length = kMaxTextLength) const;

 private:
  explicit Vocabulary(std::vector<std::string> words);

  std::vector<std::string> words_;
  std::unordered_map<std::string, int> index_;
};

enum class Extremum { kLeftmost, kRightmost, kTopmost, kBottommost };

enum class TemplateKind {
  kCategory,         // the red circle
  kExtremeCategory,  // the leftmost red circle
  kExtremeObject,    // the leftmost object
  kAllCategory,      // all red circles
  kAllColor,         // all red objects
  kAllShape,         // all circles
  kPair,             // the red circle and the blue star
  kExcept,           // everything except the red circle
};

struct Expression {
  TemplateKind kind = TemplateKind::kCategory;
  Category first;
  Category second;  // kPair only
  Extremum extremum = Extremum::kLeftmost;

  std::string text() const;
};

struct Referring {
  Expression expression;
  std::vector<int> referents;  // ascending object indices; empty = no target
};

// Centroids must beat the runner-up by this many pixels for an extremum
// expression to be considered unambiguous.
inline constexpr double kExtremeMargin = 3.0;

std::string extremum_name(Extremum e);

// Every well-formed, unambiguous expression for the scene together with its
// referent set. "the X" needs exactly one X; "all X" needs at least two or
// none; extremum expressions need a clear winner among at least two
// candidates.
std::vector<Referring> enumerate_expressions(const Scene& scene);

}  // namespace omniseg::synth
