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

#pragma once

#include <vector>

#include "maskgeo/mask.hpp"
#include "omnimodel/model.hpp"
#include "tensorkit/tensor.hpp"

namespace omniseg::objective {

using tensor::Tensor;

struct LossWeights {
  double mask = 1.0;
  double region = 0.4;
  double nt = 0.1;

  // Throws kConfig when a weight is negative or non-finite, or all are zero.
  void validate() const;
};

struct LossBreakdown {
  double l_mask = 0.0;
  double l_region = 0.0;
  double l_nt = 0.0;
  double l_total = 0.0;
};

// Mean per-pixel BCE between [H, W] logits and the ground-truth mask.
Tensor mask_loss(const Tensor& logits, const mask::BinaryMask& gt);

// Region targets: the ground truth area-resampled onto the query grid.
mask::SoftGrid region_targets(const mask::BinaryMask& gt, int grid);
// BCE between the [grid*grid] region logits and region_targets(gt, grid).
Tensor region_loss(const Tensor& region_logits, const mask::BinaryMask& gt, int grid);

// BCE of an existence logit ([1, 1] or scalar) against the label.
Tensor nt_loss(const Tensor& exist_logit, bool exists);
// Same quantity for a probability in (0, 1).
double nt_loss_value(double probability, bool exists);

double weighted_total(double l_mask, double l_region, double l_nt, const LossWeights& w);

struct SampleLoss {
  Tensor total;  // differentiable
  LossBreakdown breakdown;
};

// Loss over every decoded source. `targets` holds one mask per source in
// output order; no-target samples pass all-zero masks. Mask, region and
// existence terms are averaged over sources.
SampleLoss sample_loss(const model::ForwardOutput& out,
                       const std::vector<mask::BinaryMask>& targets, bool exists,
                       int query_grid, const LossWeights& weights);

}  // namespace omniseg::objective
