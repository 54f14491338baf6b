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

#include "objective/loss.hpp"

#include <cmath>
#include <string>

#include "common/error.hpp"
#include "tensorkit/ops.hpp"

namespace omniseg::objective {

using namespace omniseg::tensor;

void LossWeights::validate() const {
  for (double v : {mask, region, nt})
    require(std::isfinite(v) && v >= 0.0, ErrorKind::kConfig,
            "loss weights must be finite and nonnegative");
  require(mask + region + nt > 0.0, ErrorKind::kConfig,
          "at least one loss weight must be positive");
}

Tensor mask_loss(const Tensor& logits, const mask::BinaryMask& gt) {
  require(logits.rank() == 2 && logits.dim(0) == gt.height() && logits.dim(1) == gt.width(),
          ErrorKind::kDimension,
          "mask logits " + shape_str(logits.shape()) + " do not match gt " +
              std::to_string(gt.height()) + "x" + std::to_string(gt.width()));
  std::vector<double> t(gt.bits().begin(), gt.bits().end());
  return bce_with_logits(logits, t);
}

mask::SoftGrid region_targets(const mask::BinaryMask& gt, int grid) {
  return mask::resize_soft(gt, grid, grid);
}

Tensor region_loss(const Tensor& region_logits, const mask::BinaryMask& gt, int grid) {
  require(region_logits.numel() == static_cast<std::size_t>(grid) * grid,
          ErrorKind::kDimension, "region logits must cover the query grid");
  return bce_with_logits(region_logits, region_targets(gt, grid).values);
}

Tensor nt_loss(const Tensor& exist_logit, bool exists) {
  require(exist_logit.numel() == 1, ErrorKind::kDimension, "existence logit must be scalar");
  return bce_with_logits(exist_logit, {exists ? 1.0 : 0.0});
}

double nt_loss_value(double probability, bool exists) {
  require(probability > 0.0 && probability < 1.0, ErrorKind::kInvalidArgument,
          "existence probability must lie in (0, 1)");
  return exists ? -std::log(probability) : -std::log1p(-probability);
}

double weighted_total(double l_mask, double l_region, double l_nt, const LossWeights& w) {
  return w.mask * l_mask + w.region * l_region + w.nt * l_nt;
}

SampleLoss sample_loss(const model::ForwardOutput& out,
                       const std::vector<mask::BinaryMask>& targets, bool exists,
                       int query_grid, const LossWeights& weights) {
  weights.validate();
  const std::size_t k = out.sources.size();
  require(k > 0, ErrorKind::kUsage, "no decoded sources");
  require(targets.size() == k, ErrorKind::kDimension,
          "expected " + std::to_string(k) + " target masks, got " +
              std::to_string(targets.size()));
  Tensor lm, lr, ln;
  for (std::size_t i = 0; i < k; ++i) {
    const auto& s = out.sources[i];
    const Tensor m = mask_loss(s.mask_logits, targets[i]);
    const Tensor r = region_loss(s.region_logits, targets[i], query_grid);
    const Tensor n = nt_loss(s.exist_logit, exists);
    lm = i == 0 ? m : add(lm, m);
    lr = i == 0 ? r : add(lr, r);
    ln = i == 0 ? n : add(ln, n);
  }
  const double inv = 1.0 / static_cast<double>(k);
  lm = scale(lm, inv);
  lr = scale(lr, inv);
  ln = scale(ln, inv);
  SampleLoss res;
  res.total = add(add(scale(lm, weights.mask), scale(lr, weights.region)),
                  scale(ln, weights.nt));
  res.breakdown = {lm.item(), lr.item(), ln.item(), 0.0};
  res.breakdown.l_total =
      weighted_total(res.breakdown.l_mask, res.breakdown.l_region, res.breakdown.l_nt, weights);
  require(std::isfinite(res.breakdown.l_total), ErrorKind::kNumeric, "non-finite loss");
  return res;
}

}  // namespace omniseg::objective
