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

// Synthetic scenes of coloured shapes used as target and reference images.

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "maskgeo/mask.hpp"

namespace omniseg::synth {

enum class Shape { kCircle, kSquare, kTriangle, kStar };
enum class Color { kRed, kGreen, kBlue, kYellow, kPurple };

inline constexpr int kNumShapes = 4;
inline constexpr int kNumColors = 5;
inline constexpr int kNumCategories = kNumShapes * kNumColors;

struct Category {
  Shape shape = Shape::kCircle;
  Color color = Color::kRed;

  int index() const {
    return static_cast<int>(color) * kNumShapes + static_cast<int>(shape);
  }
  static Category from_index(int i);
  bool operator==(const Category& other) const = default;
};

std::string shape_name(Shape s);
std::string shape_plural(Shape s);
std::string color_name(Color c);
// "red circle"
std::string category_name(const Category& c);
std::optional<Shape> parse_shape(const std::string& word);
std::optional<Color> parse_color(const std::string& word);
std::optional<Category> parse_category(const std::string& name);

std::array<std::uint8_t, 3> palette(Color c);

enum class SizeClass { kSmall, kLarge };
enum class PositionClass { kLeft, kCenter, kRight };

struct SceneObject {
  Category category;
  mask::BinaryMask mask;
  double center_x = 0;  // pixel units, x = column
  double center_y = 0;
  double radius = 0;
  SizeClass size_class = SizeClass::kSmall;
  PositionClass position_class = PositionClass::kCenter;
};

struct Scene {
  std::uint64_t seed = 0;
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> rgb;  // row-major H x W x 3
  std::vector<SceneObject> objects;

  int count(const Category& c) const;
};

struct SceneConfig {
  int height = 64;
  int width = 64;
  int min_objects = 3;
  int max_objects = 5;
  double min_radius = 7.0;
  double max_radius = 11.0;
  double min_centroid_gap = 8.0;
  // Probability that an object reuses the category of an earlier one.
  double repeat_probability = 0.45;
  int max_retries = 200;
  // Allowed category indices; empty means all twenty.
  std::vector<int> category_pool;
};

// Pixel silhouette of a shape centred at (center_x, center_y).
mask::BinaryMask rasterize_shape(Shape s, double center_x, double center_y,
                                 double radius, int height, int width);

// Deterministic in (seed, config). Objects never touch (8-connectivity) and
// lie fully inside the frame. When placement keeps failing the scene ends
// up with fewer objects; a scene where nothing fits is an error.
Scene generate_scene(std::uint64_t seed, const SceneConfig& config);

// At least three instances spanning at least two categories.
bool is_target_scene(const Scene& s);
std::vector<Scene> select_targets(const std::vector<Scene>& scenes);

}  // namespace omniseg::synth
