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

#include "maskgeo/mask.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "common/error.hpp"

namespace omniseg::mask {

namespace {

void same_dims(const BinaryMask& a, const BinaryMask& b, const char* op) {
  require(a.height() == b.height() && a.width() == b.width(),
          ErrorKind::kDimension,
          std::string(op) + ": mask dimensions differ (" +
              std::to_string(a.height()) + "x" + std::to_string(a.width()) +
              " vs " + std::to_string(b.height()) + "x" +
              std::to_string(b.width()) + ")");
}

// Row-stochastic [out x in] resampling weights for one axis.
std::vector<double> axis_weights(int in, int out) {
  std::vector<double> w(static_cast<std::size_t>(out) * in, 0.0);
  if (out <= in) {
    const double scale = static_cast<double>(in) / out;
    for (int i = 0; i < out; ++i) {
      const double lo = i * scale, hi = (i + 1) * scale;
      for (int j = static_cast<int>(std::floor(lo));
           j < std::min(in, static_cast<int>(std::ceil(hi))); ++j) {
        const double overlap = std::min(hi, j + 1.0) - std::max(lo, 1.0 * j);
        if (overlap > 0) w[i * in + j] = overlap / scale;
      }
    }
  } else {
    for (int i = 0; i < out; ++i) {
      double x = (i + 0.5) * in / out - 0.5;
      x = std::clamp(x, 0.0, in - 1.0);
      const int lo = static_cast<int>(std::floor(x));
      const int hi = std::min(lo + 1, in - 1);
      const double f = x - lo;
      w[i * in + lo] += 1.0 - f;
      w[i * in + hi] += f;
    }
  }
  return w;
}

class Painter {
 public:
  Painter(const BinaryMask& region, std::size_t cap)
      : region_(region),
        out_(region.height(), region.width()),
        cap_(cap) {}

  // 2-px brush anchored at (row, col); falls back to the anchor pixel alone
  // when the full stamp would exceed the coverage cap.
  bool stamp(int row, int col) {
    std::vector<std::pair<int, int>> fresh;
    for (int dr = 0; dr < 2; ++dr)
      for (int dc = 0; dc < 2; ++dc) {
        const int r = row + dr, c = col + dc;
        if (r < region_.height() && c < region_.width() && region_.at(r, c) &&
            !out_.at(r, c))
          fresh.emplace_back(r, c);
      }
    if (painted_ + fresh.size() > cap_) {
      fresh.clear();
      if (region_.at(row, col) && !out_.at(row, col)) fresh.emplace_back(row, col);
      if (painted_ + fresh.size() > cap_) return false;
    }
    for (auto [r, c] : fresh) out_.set(r, c);
    painted_ += fresh.size();
    return true;
  }

  std::size_t painted() const { return painted_; }
  BinaryMask take() { return std::move(out_); }

 private:
  const BinaryMask& region_;
  BinaryMask out_;
  std::size_t cap_;
  std::size_t painted_ = 0;
};

}  // namespace

BinaryMask::BinaryMask(int height, int width)
    : BinaryMask(height, width,
                 std::vector<std::uint8_t>(
                     static_cast<std::size_t>(std::max(height, 0)) *
                         std::max(width, 0),
                     0)) {}

BinaryMask::BinaryMask(int height, int width, std::vector<std::uint8_t> bits)
    : height_(height), width_(width), bits_(std::move(bits)) {
  require(height > 0 && width > 0, ErrorKind::kDimension,
          "mask dimensions must be positive");
  require(bits_.size() == static_cast<std::size_t>(height) * width,
          ErrorKind::kDimension, "mask bit count does not match H*W");
  for (auto& b : bits_) b = b ? 1 : 0;
}

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), 1));
}

BinaryMask BinaryMask::operator|(const BinaryMask& other) const {
  same_dims(*this, other, "mask union");
  BinaryMask out = *this;
  for (std::size_t i = 0; i < bits_.size(); ++i) out.bits_[i] |= other.bits_[i];
  return out;
}

BinaryMask BinaryMask::operator&(const BinaryMask& other) const {
  same_dims(*this, other, "mask intersection");
  BinaryMask out = *this;
  for (std::size_t i = 0; i < bits_.size(); ++i) out.bits_[i] &= other.bits_[i];
  return out;
}

BinaryMask BinaryMask::operator~() const {
  BinaryMask out = *this;
  for (auto& b : out.bits_) b ^= 1;
  return out;
}

RleMask rle_encode(const BinaryMask& m) {
  RleMask r{m.height(), m.width(), {}};
  std::uint8_t current = 0;
  std::uint32_t run = 0;
  for (int col = 0; col < m.width(); ++col)
    for (int row = 0; row < m.height(); ++row) {
      const std::uint8_t v = m.at(row, col) ? 1 : 0;
      if (v != current) {
        r.runs.push_back(run);
        run = 0;
        current = v;
      }
      ++run;
    }
  r.runs.push_back(run);
  return r;
}

BinaryMask rle_decode(const RleMask& r) {
  require(r.height > 0 && r.width > 0, ErrorKind::kFormat,
          "rle: dimensions must be positive");
  std::uint64_t total = 0;
  for (auto v : r.runs) total += v;
  require(total == static_cast<std::uint64_t>(r.height) * r.width,
          ErrorKind::kFormat,
          "rle: runs sum to " + std::to_string(total) + ", expected " +
              std::to_string(static_cast<std::uint64_t>(r.height) * r.width));
  BinaryMask m(r.height, r.width);
  std::uint64_t pos = 0;
  bool on = false;
  for (auto v : r.runs) {
    if (on) {
      for (std::uint64_t k = pos; k < pos + v; ++k) {
        m.set(static_cast<int>(k % r.height), static_cast<int>(k / r.height));
      }
    }
    pos += v;
    on = !on;
  }
  return m;
}

Box box_from_mask(const BinaryMask& m) {
  Box b{m.height(), m.width(), -1, -1};
  for (int row = 0; row < m.height(); ++row)
    for (int col = 0; col < m.width(); ++col) {
      if (!m.at(row, col)) continue;
      b.row_min = std::min(b.row_min, row);
      b.col_min = std::min(b.col_min, col);
      b.row_max = std::max(b.row_max, row);
      b.col_max = std::max(b.col_max, col);
    }
  require(b.row_max >= 0, ErrorKind::kEmptyRegion,
          "box_from_mask: mask has no foreground pixels");
  return b;
}

BinaryMask rasterize_box(const Box& b, int height, int width) {
  require(b.row_min >= 0 && b.col_min >= 0 && b.row_min <= b.row_max &&
              b.col_min <= b.col_max && b.row_max < height &&
              b.col_max < width,
          ErrorKind::kInvalidArgument, "rasterize_box: box out of bounds");
  BinaryMask m(height, width);
  for (int row = b.row_min; row <= b.row_max; ++row)
    for (int col = b.col_min; col <= b.col_max; ++col) m.set(row, col);
  return m;
}

BinaryMask scribble_from_mask(const BinaryMask& m, std::uint64_t seed,
                              ScribbleStyle style) {
  const std::size_t area = m.count();
  require(area > 0, ErrorKind::kEmptyRegion,
          "scribble_from_mask: mask has no foreground pixels");
  std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ULL + 0x5C81B1E5ULL);

  std::vector<std::pair<int, int>> fg, interior;
  for (int row = 0; row < m.height(); ++row)
    for (int col = 0; col < m.width(); ++col) {
      if (!m.at(row, col)) continue;
      fg.emplace_back(row, col);
      const bool inside = row > 0 && col > 0 && row + 1 < m.height() &&
                          col + 1 < m.width() && m.at(row - 1, col) &&
                          m.at(row + 1, col) && m.at(row, col - 1) &&
                          m.at(row, col + 1);
      if (inside) interior.emplace_back(row, col);
    }
  auto pick = [&](const std::vector<std::pair<int, int>>& pool) {
    std::uniform_int_distribution<std::size_t> d(0, pool.size() - 1);
    return pool[d(rng)];
  };

  if (area < 4) {
    BinaryMask dot(m.height(), m.width());
    auto [r, c] = pick(fg);
    dot.set(r, c);
    return dot;
  }
  if (interior.empty()) interior = fg;

  const auto cap = static_cast<std::size_t>(std::floor(0.40 * area));
  const auto minimum =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(0.02 * area)));
  std::uniform_real_distribution<double> frac(0.05, 0.25);
  const std::size_t target = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::lround(frac(rng) * area)), minimum, cap);

  Painter painter(m, cap);
  if (style == ScribbleStyle::kLines) {
    std::uniform_int_distribution<int> n_strokes(1, 3);
    std::uniform_real_distribution<double> angle(0.0, 2 * std::numbers::pi);
    std::normal_distribution<double> wobble(0.0, 0.35);
    const int strokes = n_strokes(rng);
    for (int s = 0; s < strokes && painter.painted() < target; ++s) {
      const std::size_t goal = target * (s + 1) / strokes;
      auto [r0, c0] = pick(interior);
      double y = r0, x = c0;
      double theta = angle(rng);
      painter.stamp(r0, c0);
      for (std::size_t step = 0; step < 4 * area && painter.painted() < goal;
           ++step) {
        bool moved = false;
        for (int attempt = 0; attempt < 8 && !moved; ++attempt) {
          const double t = theta + wobble(rng);
          const double ny = y + std::sin(t), nx = x + std::cos(t);
          const int ry = static_cast<int>(std::lround(ny));
          const int rx = static_cast<int>(std::lround(nx));
          if (ry >= 0 && rx >= 0 && ry < m.height() && rx < m.width() &&
              m.at(ry, rx)) {
            y = ny;
            x = nx;
            theta = t;
            moved = true;
          } else {
            theta = angle(rng);
          }
        }
        if (!moved) break;
        if (!painter.stamp(static_cast<int>(std::lround(y)),
                           static_cast<int>(std::lround(x))))
          break;
      }
    }
  } else {
    std::uniform_int_distribution<int> n_dots(2, 5);
    const int dots = n_dots(rng);
    for (int i = 0; i < dots && painter.painted() < target; ++i) {
      auto [r, c] = pick(interior);
      painter.stamp(r, c);
    }
  }
  for (int guard = 0; painter.painted() < minimum && guard < 10000; ++guard) {
    auto [r, c] = pick(fg);
    painter.stamp(r, c);
  }
  return painter.take();
}

BinaryMask rasterize_strokes(const std::vector<Stroke>& strokes, int height,
                             int width) {
  BinaryMask out(height, width);
  auto stamp = [&](double x, double y) {
    const int row = static_cast<int>(std::floor(y));
    const int col = static_cast<int>(std::floor(x));
    for (int dr = 0; dr < 2; ++dr)
      for (int dc = 0; dc < 2; ++dc) {
        const int r = row + dr, c = col + dc;
        if (r >= 0 && c >= 0 && r < height && c < width) out.set(r, c);
      }
  };
  for (const auto& stroke : strokes) {
    for (const auto& [x, y] : stroke) {
      require(std::isfinite(x) && std::isfinite(y),
              ErrorKind::kInvalidArgument, "stroke point is not finite");
    }
    if (stroke.size() == 1) stamp(stroke[0].first, stroke[0].second);
    for (std::size_t i = 1; i < stroke.size(); ++i) {
      const auto [x0, y0] = stroke[i - 1];
      const auto [x1, y1] = stroke[i];
      const int steps = std::max(
          1, static_cast<int>(std::ceil(std::max(std::abs(x1 - x0),
                                                 std::abs(y1 - y0)))));
      for (int k = 0; k <= steps; ++k) {
        const double t = static_cast<double>(k) / steps;
        stamp(x0 + t * (x1 - x0), y0 + t * (y1 - y0));
      }
    }
  }
  return out;
}

double iou(const BinaryMask& a, const BinaryMask& b) {
  same_dims(a, b, "iou");
  std::size_t inter = 0, uni = 0;
  const auto& ab = a.bits();
  const auto& bb = b.bits();
  for (std::size_t i = 0; i < ab.size(); ++i) {
    inter += ab[i] & bb[i];
    uni += ab[i] | bb[i];
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

BinaryMask resize_nearest(const BinaryMask& m, int height, int width) {
  require(height >= 1 && width >= 1, ErrorKind::kInvalidArgument,
          "resize_nearest: target size must be positive");
  BinaryMask out(height, width);
  for (int i = 0; i < height; ++i) {
    const int si = static_cast<int>(static_cast<long long>(i) * m.height() / height);
    for (int j = 0; j < width; ++j) {
      const int sj = static_cast<int>(static_cast<long long>(j) * m.width() / width);
      out.set(i, j, m.at(si, sj));
    }
  }
  return out;
}

SoftGrid resize_soft(const BinaryMask& m, int height, int width) {
  require(height >= 1 && width >= 1, ErrorKind::kInvalidArgument,
          "resize_soft: target size must be positive");
  const auto wy = axis_weights(m.height(), height);
  const auto wx = axis_weights(m.width(), width);
  // Rows first: tmp[height x W]
  std::vector<double> tmp(static_cast<std::size_t>(height) * m.width(), 0.0);
  for (int i = 0; i < height; ++i)
    for (int r = 0; r < m.height(); ++r) {
      const double w = wy[i * m.height() + r];
      if (w == 0.0) continue;
      for (int c = 0; c < m.width(); ++c)
        if (m.at(r, c)) tmp[i * m.width() + c] += w;
    }
  SoftGrid out{height, width,
               std::vector<double>(static_cast<std::size_t>(height) * width, 0.0)};
  for (int i = 0; i < height; ++i)
    for (int j = 0; j < width; ++j) {
      double acc = 0.0;
      for (int c = 0; c < m.width(); ++c) acc += wx[j * m.width() + c] * tmp[i * m.width() + c];
      out.values[i * width + j] = std::clamp(acc, 0.0, 1.0);
    }
  return out;
}

std::string scribble_style_name(ScribbleStyle s) {
  return s == ScribbleStyle::kLines ? "lines" : "dots";
}

}  // namespace omniseg::mask
