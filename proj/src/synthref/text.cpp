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

#include "synthref/text.hpp"

#include <algorithm>
#include <cctype>

#include "common/error.hpp"

namespace omniseg::synth {
namespace {

std::vector<std::string> standard_words() {
  std::vector<std::string> w = {"<pad>",     "<unk>",      "the",
                                "all",       "and",        "everything",
                                "except",    "object",     "objects",
                                "leftmost",  "rightmost",  "topmost",
                                "bottommost"};
  for (int c = 0; c < kNumColors; ++c) w.push_back(color_name(static_cast<Color>(c)));
  for (int s = 0; s < kNumShapes; ++s) {
    w.push_back(shape_name(static_cast<Shape>(s)));
    w.push_back(shape_plural(static_cast<Shape>(s)));
  }
  return w;
}

double extremum_key(const SceneObject& o, Extremum e) {
  switch (e) {
    case Extremum::kLeftmost: return o.center_x;
    case Extremum::kRightmost: return -o.center_x;
    case Extremum::kTopmost: return o.center_y;
    case Extremum::kBottommost: return -o.center_y;
  }
  return 0;
}

// Index of the clear winner among `candidates`, or -1.
int extreme_winner(const Scene& scene, const std::vector<int>& candidates,
                   Extremum e) {
  if (candidates.size() < 2) return -1;
  std::vector<std::pair<double, int>> keyed;
  for (int i : candidates) keyed.emplace_back(extremum_key(scene.objects[i], e), i);
  std::sort(keyed.begin(), keyed.end());
  if (keyed[1].first - keyed[0].first < kExtremeMargin) return -1;
  return keyed[0].second;
}

template <typename Pred>
std::vector<int> matching(const Scene& scene, Pred pred) {
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(scene.objects.size()); ++i)
    if (pred(scene.objects[i])) out.push_back(i);
  return out;
}

constexpr Extremum kExtrema[] = {Extremum::kLeftmost, Extremum::kRightmost,
                                 Extremum::kTopmost, Extremum::kBottommost};

}  // namespace

Vocabulary::Vocabulary(std::vector<std::string> words) : words_(std::move(words)) {
  for (int i = 0; i < static_cast<int>(words_.size()); ++i) index_[words_[i]] = i;
}

const Vocabulary& Vocabulary::standard() {
  static const Vocabulary vocab(standard_words());
  return vocab;
}

const std::string& Vocabulary::word(int id) const {
  require(id >= 0 && id < size(), ErrorKind::kInvalidArgument,
          "token id out of range: " + std::to_string(id));
  return words_[id];
}

int Vocabulary::find(const std::string& word) const {
  const auto it = index_.find(word);
  return it == index_.end() ? -1 : it->second;
}

std::vector<std::string> Vocabulary::split_words(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto u = static_cast<unsigned char>(ch);
    if (std::isalpha(u)) {
      cur.push_back(static_cast<char>(std::tolower(u)));
    } else if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

std::vector<int> Vocabulary::encode(const std::string& text, bool allow_unknown,
                                    int length) const {
  require(length > 0, ErrorKind::kInvalidArgument, "length must be positive");
  std::vector<int> ids;
  for (const auto& w : split_words(text)) {
    int id = find(w);
    if (id < 0) {
      require(allow_unknown, ErrorKind::kInvalidArgument,
              "word not in vocabulary: " + w);
      id = kUnk;
    }
    if (static_cast<int>(ids.size()) < length) ids.push_back(id);
  }
  ids.resize(length, kPad);
  return ids;
}

std::string extremum_name(Extremum e) {
  switch (e) {
    case Extremum::kLeftmost: return "leftmost";
    case Extremum::kRightmost: return "rightmost";
    case Extremum::kTopmost: return "topmost";
    case Extremum::kBottommost: return "bottommost";
  }
  return "";
}

std::string Expression::text() const {
  switch (kind) {
    case TemplateKind::kCategory:
      return "the " + category_name(first);
    case TemplateKind::kExtremeCategory:
      return "the " + extremum_name(extremum) + " " + category_name(first);
    case TemplateKind::kExtremeObject:
      return "the " + extremum_name(extremum) + " object";
    case TemplateKind::kAllCategory:
      return "all " + color_name(first.color) + " " + shape_plural(first.shape);
    case TemplateKind::kAllColor:
      return "all " + color_name(first.color) + " objects";
    case TemplateKind::kAllShape:
      return "all " + shape_plural(first.shape);
    case TemplateKind::kPair:
      return "the " + category_name(first) + " and the " + category_name(second);
    case TemplateKind::kExcept:
      return "everything except the " + category_name(first);
  }
  return "";
}

std::vector<Referring> enumerate_expressions(const Scene& scene) {
  std::vector<Referring> out;
  auto add = [&](Expression e, std::vector<int> referents) {
    out.push_back({e, std::move(referents)});
  };
  const int n = static_cast<int>(scene.objects.size());

  for (int ci = 0; ci < kNumCategories; ++ci) {
    const Category cat = Category::from_index(ci);
    const auto members =
        matching(scene, [&](const SceneObject& o) { return o.category == cat; });
    Expression e;
    e.first = cat;
    if (members.size() <= 1) {
      e.kind = TemplateKind::kCategory;
      add(e, members);
    }
    if (members.empty() || members.size() >= 2) {
      e.kind = TemplateKind::kAllCategory;
      add(e, members);
    }
    for (Extremum x : kExtrema) {
      e.kind = TemplateKind::kExtremeCategory;
      e.extremum = x;
      if (members.empty()) {
        add(e, {});
      } else if (const int w = extreme_winner(scene, members, x); w >= 0) {
        add(e, {w});
      }
    }
    if (members.size() == 1 && n - 1 >= 2) {
      e.kind = TemplateKind::kExcept;
      std::vector<int> rest;
      for (int i = 0; i < n; ++i)
        if (i != members.front()) rest.push_back(i);
      add(e, rest);
    }
  }

  for (int c = 0; c < kNumColors; ++c) {
    const auto color = static_cast<Color>(c);
    const auto members =
        matching(scene, [&](const SceneObject& o) { return o.category.color == color; });
    if (members.size() == 1) continue;
    Expression e;
    e.kind = TemplateKind::kAllColor;
    e.first.color = color;
    add(e, members);
  }
  for (int s = 0; s < kNumShapes; ++s) {
    const auto shape = static_cast<Shape>(s);
    const auto members =
        matching(scene, [&](const SceneObject& o) { return o.category.shape == shape; });
    if (members.size() == 1) continue;
    Expression e;
    e.kind = TemplateKind::kAllShape;
    e.first.shape = shape;
    add(e, members);
  }

  std::vector<int> all(n);
  for (int i = 0; i < n; ++i) all[i] = i;
  for (Extremum x : kExtrema) {
    if (const int w = extreme_winner(scene, all, x); w >= 0) {
      Expression e;
      e.kind = TemplateKind::kExtremeObject;
      e.extremum = x;
      add(e, {w});
    }
  }

  std::vector<int> unique;
  for (int i = 0; i < n; ++i)
    if (scene.count(scene.objects[i].category) == 1) unique.push_back(i);
  for (std::size_t a = 0; a < unique.size(); ++a)
    for (std::size_t b = 0; b < unique.size(); ++b) {
      if (a == b) continue;
      Expression e;
      e.kind = TemplateKind::kPair;
      e.first = scene.objects[unique[a]].category;
      e.second = scene.objects[unique[b]].category;
      add(e, {std::min(unique[a], unique[b]), std::max(unique[a], unique[b])});
    }
  return out;
}

}  // namespace omniseg::synth
