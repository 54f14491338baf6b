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

#include "synthref/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "common/error.hpp"

namespace omniseg::synth {
namespace {

constexpr double kPointyScale = 1.25;  // triangle/star circumradius factor
constexpr double kSquareHalf = 0.85;
constexpr double kStarInner = 0.5;

bool inside_polygon(const std::vector<std::pair<double, double>>& poly,
                    double x, double y) {
  bool in = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const auto [xi, yi] = poly[i];
    const auto [xj, yj] = poly[j];
    if ((yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi)
      in = !in;
  }
  return in;
}

std::vector<std::pair<double, double>> regular_star(double cx, double cy,
                                                    double outer, double inner,
                                                    int tips) {
  std::vector<std::pair<double, double>> poly;
  const double step = std::numbers::pi / tips;
  for (int k = 0; k < 2 * tips; ++k) {
    const double rad = (k % 2 == 0) ? outer : inner;
    const double ang = -std::numbers::pi / 2 + k * step;
    poly.emplace_back(cx + rad * std::cos(ang), cy + rad * std::sin(ang));
  }
  return poly;
}

std::uint8_t clamp_byte(int v) {
  return static_cast<std::uint8_t>(std::clamp(v, 0, 255));
}

}  // namespace

Category Category::from_index(int i) {
  require(i >= 0 && i < kNumCategories, ErrorKind::kInvalidArgument,
          "category index out of range");
  return {static_cast<Shape>(i % kNumShapes),
          static_cast<Color>(i / kNumShapes)};
}

std::string shape_name(Shape s) {
  switch (s) {
    case Shape::kCircle: return "circle";
    case Shape::kSquare: return "square";
    case Shape::kTriangle: return "triangle";
    case Shape::kStar: return "star";
  }
  return "";
}

std::string shape_plural(Shape s) { return shape_name(s) + "s"; }

std::string color_name(Color c) {
  switch (c) {
    case Color::kRed: return "red";
    case Color::kGreen: return "green";
    case Color::kBlue: return "blue";
    case Color::kYellow: return "yellow";
    case Color::kPurple: return "purple";
  }
  return "";
}

std::string category_name(const Category& c) {
  return color_name(c.color) + " " + shape_name(c.shape);
}

std::optional<Shape> parse_shape(const std::string& word) {
  for (int i = 0; i < kNumShapes; ++i)
    if (shape_name(static_cast<Shape>(i)) == word) return static_cast<Shape>(i);
  return std::nullopt;
}

std::optional<Color> parse_color(const std::string& word) {
  for (int i = 0; i < kNumColors; ++i)
    if (color_name(static_cast<Color>(i)) == word) return static_cast<Color>(i);
  return std::nullopt;
}

std::optional<Category> parse_category(const std::string& name) {
  const auto space = name.find(' ');
  if (space == std::string::npos) return std::nullopt;
  const auto color = parse_color(name.substr(0, space));
  const auto shape = parse_shape(name.substr(space + 1));
  if (!color || !shape) return std::nullopt;
  return Category{*shape, *color};
}

std::array<std::uint8_t, 3> palette(Color c) {
  switch (c) {
    case Color::kRed: return {220, 45, 40};
    case Color::kGreen: return {45, 185, 70};
    case Color::kBlue: return {55, 90, 225};
    case Color::kYellow: return {235, 215, 45};
    case Color::kPurple: return {160, 65, 200};
  }
  return {0, 0, 0};
}

int Scene::count(const Category& c) const {
  return static_cast<int>(std::count_if(
      objects.begin(), objects.end(),
      [&](const SceneObject& o) { return o.category == c; }));
}

mask::BinaryMask rasterize_shape(Shape s, double center_x, double center_y,
                                 double radius, int height, int width) {
  mask::BinaryMask m(height, width);
  std::vector<std::pair<double, double>> poly;
  if (s == Shape::kTriangle)
    poly = regular_star(center_x, center_y, kPointyScale * radius,
                        kPointyScale * radius * 0.5, 3);
  if (s == Shape::kStar)
    poly = regular_star(center_x, center_y, kPointyScale * radius,
                        kPointyScale * radius * kStarInner, 5);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      const double x = c + 0.5, y = r + 0.5;
      const double dx = x - center_x, dy = y - center_y;
      bool on = false;
      switch (s) {
        case Shape::kCircle:
          on = dx * dx + dy * dy <= radius * radius;
          break;
        case Shape::kSquare:
          on = std::abs(dx) <= kSquareHalf * radius &&
               std::abs(dy) <= kSquareHalf * radius;
          break;
        case Shape::kTriangle:
        case Shape::kStar:
          on = inside_polygon(poly, x, y);
          break;
      }
      if (on) m.set(r, c);
    }
  }
  return m;
}

Scene generate_scene(std::uint64_t seed, const SceneConfig& config) {
  require(config.min_objects >= 1 && config.max_objects >= config.min_objects,
          ErrorKind::kConfig, "object count range must satisfy 1 <= min <= max");
  require(config.min_radius > 0 && config.max_radius >= config.min_radius,
          ErrorKind::kConfig, "radius range must be positive and ordered");
  const double extent = kPointyScale * config.max_radius + 1;
  require(2 * extent < config.height && 2 * extent < config.width,
          ErrorKind::kConfig, "frame too small for the radius range");
  std::vector<int> pool = config.category_pool;
  if (pool.empty())
    for (int i = 0; i < kNumCategories; ++i) pool.push_back(i);

  std::mt19937_64 rng(seed ^ 0xA5A5F00DCAFEULL);
  const int height = config.height, width = config.width;
  Scene scene;
  scene.seed = seed;
  scene.height = height;
  scene.width = width;

  const int wanted = std::uniform_int_distribution<int>(
      config.min_objects, config.max_objects)(rng);
  mask::BinaryMask occupied(height, width);
  std::uniform_real_distribution<double> radius_dist(config.min_radius,
                                                     config.max_radius);
  std::uniform_int_distribution<std::size_t> pool_pick(0, pool.size() - 1);
  std::bernoulli_distribution repeat(config.repeat_probability);

  for (int i = 0; i < wanted; ++i) {
    Category cat = Category::from_index(pool[pool_pick(rng)]);
    if (!scene.objects.empty() && repeat(rng)) {
      std::uniform_int_distribution<std::size_t> prev(0, scene.objects.size() - 1);
      cat = scene.objects[prev(rng)].category;
    }
    bool placed = false;
    for (int attempt = 0; attempt < config.max_retries && !placed; ++attempt) {
      const double radius = radius_dist(rng);
      const double margin = kPointyScale * radius + 1;
      const double cx =
          std::uniform_real_distribution<double>(margin, width - margin)(rng);
      const double cy =
          std::uniform_real_distribution<double>(margin, height - margin)(rng);
      auto m = rasterize_shape(cat.shape, cx, cy, radius, height, width);
      if (m.empty_region()) continue;
      double sx = 0, sy = 0;
      bool touches = false;
      for (int r = 0; r < height && !touches; ++r) {
        for (int c = 0; c < width && !touches; ++c) {
          if (!m.at(r, c)) continue;
          sx += c + 0.5;
          sy += r + 0.5;
          for (int dr = -1; dr <= 1 && !touches; ++dr)
            for (int dc = -1; dc <= 1; ++dc) {
              const int rr = r + dr, cc = c + dc;
              if (rr >= 0 && rr < height && cc >= 0 && cc < width &&
                  occupied.at(rr, cc)) {
                touches = true;
                break;
              }
            }
        }
      }
      if (touches) continue;
      const double n = static_cast<double>(m.count());
      const double mx = sx / n, my = sy / n;
      bool crowded = false;
      for (const auto& o : scene.objects)
        if (std::hypot(o.center_x - mx, o.center_y - my) <
            config.min_centroid_gap)
          crowded = true;
      if (crowded) continue;

      SceneObject obj;
      obj.category = cat;
      obj.center_x = mx;
      obj.center_y = my;
      obj.radius = radius;
      obj.size_class = radius < 0.5 * (config.min_radius + config.max_radius)
                           ? SizeClass::kSmall
                           : SizeClass::kLarge;
      obj.position_class = mx < width / 3.0        ? PositionClass::kLeft
                           : mx > 2.0 * width / 3.0 ? PositionClass::kRight
                                                     : PositionClass::kCenter;
      occupied = occupied | m;
      obj.mask = std::move(m);
      scene.objects.push_back(std::move(obj));
      placed = true;
    }
  }
  require(!scene.objects.empty(), ErrorKind::kUnavailable,
          "no object could be placed in the scene");

  scene.rgb.assign(static_cast<std::size_t>(height) * width * 3, 0);
  const int base = std::uniform_int_distribution<int>(25, 70)(rng);
  std::uniform_int_distribution<int> bg_noise(-6, 6);
  for (auto& v : scene.rgb) v = clamp_byte(base + bg_noise(rng));
  std::uniform_int_distribution<int> tint(-15, 15), fg_noise(-10, 10);
  for (const auto& o : scene.objects) {
    const auto rgb = palette(o.category.color);
    const int shift = tint(rng);
    for (int r = 0; r < height; ++r)
      for (int c = 0; c < width; ++c) {
        if (!o.mask.at(r, c)) continue;
        const std::size_t at = (static_cast<std::size_t>(r) * width + c) * 3;
        for (int ch = 0; ch < 3; ++ch)
          scene.rgb[at + ch] = clamp_byte(rgb[ch] + shift + fg_noise(rng));
      }
  }
  return scene;
}

bool is_target_scene(const Scene& s) {
  if (s.objects.size() < 3) return false;
  for (const auto& o : s.objects)
    if (!(o.category == s.objects.front().category)) return true;
  return false;
}

std::vector<Scene> select_targets(const std::vector<Scene>& scenes) {
  std::vector<Scene> kept;
  for (const auto& s : scenes)
    if (is_target_scene(s)) kept.push_back(s);
  return kept;
}

}  // namespace omniseg::synth
