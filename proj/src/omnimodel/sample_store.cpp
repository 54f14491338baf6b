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

#include "omnimodel/sample_store.hpp"

#include <set>

#include "common/error.hpp"
#include "synthref/text.hpp"

namespace omniseg::model {

namespace {

Tensor flip_image(const Tensor& image) {
  const int c = image.dim(1), h = image.dim(2), w = image.dim(3);
  const auto src = image.data();
  std::vector<double> dst(src.size());
  for (int k = 0; k < c * h; ++k)
    for (int x = 0; x < w; ++x)
      dst[static_cast<std::size_t>(k) * w + x] = src[static_cast<std::size_t>(k) * w + (w - 1 - x)];
  return Tensor::from(image.shape(), std::move(dst));
}

mask::BinaryMask flip_mask(const mask::BinaryMask& m) {
  mask::BinaryMask out(m.height(), m.width());
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x)
      if (m.at(y, x)) out.set(y, m.width() - 1 - x);
  return out;
}

bool coin(std::mt19937_64& rng) { return std::bernoulli_distribution(0.5)(rng); }

}  // namespace

SampleStore::SampleStore(const std::filesystem::path& root) : root_(root) {
  for (auto& s : synth::load_scenes(root)) {
    images_[s.id] = synth::read_png(root / s.image);
    objects_[s.id] = std::move(s.scene.objects);
  }
}

void SampleStore::set_reference_pool(const std::string& split) {
  std::set<std::string> scenes;
  for (const auto& r : records(split))
    if (r.visual) scenes.insert(r.visual->ref_scene);
  pool_.clear();
  for (const auto& id : scenes) {
    auto it = objects_.find(id);
    require(it != objects_.end(), ErrorKind::kNotFound, "unknown reference scene: " + id);
    for (const auto& o : it->second) pool_[o.category.index()].push_back({id, o.mask});
  }
}

std::size_t SampleStore::reference_pool_size() const {
  std::size_t n = 0;
  for (const auto& [k, v] : pool_) n += v.size();
  return n;
}

PreparedSample SampleStore::prepare_augmented(const synth::ManifestRecord& record,
                                              SourceFilter filter,
                                              std::optional<synth::PromptKind> kind,
                                              const Augmentation& augmentation,
                                              std::mt19937_64& rng) const {
  PreparedSample out = prepare(record, filter, kind);
  if (out.prompts.visual) {
    const auto& v = *record.visual;
    if (augmentation.resample_reference) {
      const auto category = synth::parse_category(v.category);
      require(category.has_value(), ErrorKind::kFormat, record.id + ": bad reference category");
      auto it = pool_.find(category->index());
      if (it != pool_.end() && !it->second.empty()) {
        const auto& pick = it->second[std::uniform_int_distribution<std::size_t>(
            0, it->second.size() - 1)(rng)];
        const auto style = coin(rng) ? mask::ScribbleStyle::kLines : mask::ScribbleStyle::kDots;
        out.prompts.visual = VisualInput{
            image_to_input(image(pick.scene)),
            synth::make_spatial_prompt(pick.instance, kind.value_or(v.kind), rng(), style)};
      }
    }
    if (augmentation.flip && coin(rng)) {
      auto& vis = *out.prompts.visual;
      vis.reference_image = flip_image(vis.reference_image);
      vis.prompt = flip_mask(vis.prompt);
    }
  }
  if (augmentation.flip && coin(rng)) {
    out.image = flip_image(out.image);
    for (auto& t : out.targets) t = flip_mask(t);
    if (out.prompts.text_tokens) {
      const auto& vocab = synth::Vocabulary::standard();
      const int left = vocab.find("leftmost"), right = vocab.find("rightmost");
      for (int& id : *out.prompts.text_tokens) {
        if (id == left) id = right;
        else if (id == right) id = left;
      }
    }
  }
  return out;
}

const std::vector<synth::ManifestRecord>& SampleStore::records(const std::string& split) {
  auto it = manifests_.find(split);
  if (it == manifests_.end()) it = manifests_.emplace(split, synth::load_manifest(root_, split)).first;
  return it->second;
}

const synth::RgbImage& SampleStore::image(const std::string& scene_id) const {
  auto it = images_.find(scene_id);
  require(it != images_.end(), ErrorKind::kNotFound, "unknown scene: " + scene_id);
  return it->second;
}

PreparedSample SampleStore::prepare(const synth::ManifestRecord& record, SourceFilter filter,
                                    std::optional<synth::PromptKind> kind) const {
  PreparedSample out;
  out.id = record.id;
  out.image = image_to_input(image(record.scene));
  out.exists = record.exists;
  out.case_label = record.case_label;
  for (const auto& g : record.gt) {
    const bool text = g.source == synth::Source::kText;
    if (filter == SourceFilter::kTextOnly && !text) continue;
    if (filter == SourceFilter::kVisualOnly && text) continue;
    if (text) {
      require(record.text.has_value(), ErrorKind::kFormat, record.id + ": text gt without text");
      out.prompts.text_tokens = record.text_tokens;
    } else {
      require(record.visual.has_value(), ErrorKind::kFormat,
              record.id + ": visual gt without reference");
      const auto& v = *record.visual;
      mask::BinaryMask prompt = kind && *kind != v.kind
                                    ? synth::make_spatial_prompt(mask::rle_decode(v.instance),
                                                                 *kind, v.scribble_seed, v.style)
                                    : mask::rle_decode(v.prompt);
      out.prompts.visual = VisualInput{image_to_input(image(v.ref_scene)), std::move(prompt)};
    }
    out.sources.push_back(g.source);
    out.targets.push_back(mask::rle_decode(g.mask));
  }
  require(!out.sources.empty(), ErrorKind::kUsage,
          record.id + ": no prompt left after source filtering");
  return out;
}

}  // namespace omniseg::model
