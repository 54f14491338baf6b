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

// Binary masks, their run-length form, and the spatial-prompt geometry
// built on them (boxes, scribbles, IoU, rescaling).

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace omniseg::mask {

// Row-major H x W grid of 0/1 values.
class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(int height, int width);
  BinaryMask(int height, int width, std::vector<std::uint8_t> bits);

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return bits_.size(); }

  bool at(int row, int col) const { return bits_[index(row, col)] != 0; }
  void set(int row, int col, bool on = true) {
    bits_[index(row, col)] = on ? 1 : 0;
  }
  const std::vector<std::uint8_t>& bits() const { return bits_; }

  std::size_t count() const;
  bool empty_region() const { return count() == 0; }

  BinaryMask operator|(const BinaryMask& other) const;
  BinaryMask operator&(const BinaryMask& other) const;
  BinaryMask operator~() const;
  bool operator==(const BinaryMask& other) const = default;

 private:
  std::size_t index(int row, int col) const {
    return static_cast<std::size_t>(row) * width_ + col;
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> bits_;
};

// Alternating background/foreground run lengths over column-major pixel
// order, always starting with a (possibly empty) background run.
struct RleMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint32_t> runs;

  bool operator==(const RleMask& other) const = default;
};

// Inclusive pixel bounds.
struct Box {
  int row_min = 0;
  int col_min = 0;
  int row_max = 0;
  int col_max = 0;

  bool operator==(const Box& other) const = default;
};

struct SoftGrid {
  int height = 0;
  int width = 0;
  std::vector<double> values;  // row-major

  double at(int row, int col) const {
    return values[static_cast<std::size_t>(row) * width + col];
  }
};

enum class ScribbleStyle { kLines, kDots };

// Polyline in image coordinates: (x, y) = (col, row) pairs.
using Stroke = std::vector<std::pair<double, double>>;

RleMask rle_encode(const BinaryMask& m);
BinaryMask rle_decode(const RleMask& r);

Box box_from_mask(const BinaryMask& m);
BinaryMask rasterize_box(const Box& b, int height, int width);

// Random strokes (or dots) inside the mask, painted with a 2-px brush and
// clipped to the mask. Coverage stays within [2%, 40%] of the mask area for
// masks of at least 4 pixels; smaller masks get a single-pixel dot.
BinaryMask scribble_from_mask(const BinaryMask& m, std::uint64_t seed,
                              ScribbleStyle style);

// Rasterizes polylines with the same 2-px brush the scribble generator uses.
BinaryMask rasterize_strokes(const std::vector<Stroke>& strokes, int height,
                             int width);

// |a & b| / |a | b|; 1 when both are empty.
double iou(const BinaryMask& a, const BinaryMask& b);

BinaryMask resize_nearest(const BinaryMask& m, int height, int width);
// Area-weighted averaging on downscaled axes, half-pixel bilinear
// interpolation on upscaled axes. Values stay in [0, 1].
SoftGrid resize_soft(const BinaryMask& m, int height, int width);

std::string scribble_style_name(ScribbleStyle s);

}  // namespace omniseg::mask
