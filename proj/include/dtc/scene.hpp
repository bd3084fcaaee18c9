// Copyright 2026 The DTC Authors. All Rights Reserved.
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

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dtc::scene {

enum class Shape : std::uint8_t { circle, square, triangle };
enum class Color : std::uint8_t { red, green, blue, yellow, purple, cyan, brown, orange };
enum class Size : std::uint8_t { small, large };
enum class Texture : std::uint8_t { solid, outlined };
enum class Relation : std::uint8_t { left_of, right_of, above, below };

inline constexpr int kNumShapes = 3;
inline constexpr int kNumColors = 8;
inline constexpr int kNumSizes = 2;
inline constexpr int kNumTextures = 2;

std::string_view to_string(Shape s);
std::string_view to_string(Color c);
std::string_view to_string(Size s);
std::string_view to_string(Texture t);
std::string_view to_string(Relation r);

std::optional<Shape> parse_shape(std::string_view word);
std::optional<Color> parse_color(std::string_view word);
std::optional<Size> parse_size(std::string_view word);
std::optional<Texture> parse_texture(std::string_view word);

using Rgb = std::array<std::uint8_t, 3>;

/// 8-bit RGB value used by the rasterizer for each named color.
Rgb color_rgb(Color c);
/// Background fill; uniform over the canvas.
Rgb background_rgb();

/// Maps an 8-bit channel to the [-1, 1] range used by the networks.
constexpr float to_unit(std::uint8_t v) { return static_cast<float>(v) / 127.5f - 1.0f; }

struct Point {
  double x = 0.0;
  double y = 0.0;
};

/// Corner-convention box in normalized [0,1] coordinates (y grows downwards).
struct Box {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 1.0;
  double y2 = 1.0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  bool valid() const { return 0.0 <= x1 && x1 < x2 && x2 <= 1.0 && 0.0 <= y1 && y1 < y2 && y2 <= 1.0; }
  bool contains(const Box& other) const {
    return x1 <= other.x1 && y1 <= other.y1 && other.x2 <= x2 && other.y2 <= y2;
  }
  friend bool operator==(const Box&, const Box&) = default;
};

struct ObjectSpec {
  Shape shape = Shape::circle;
  Color color = Color::red;
  Size size = Size::small;
  Texture texture = Texture::solid;
  Point center;
  double radius = 0.1;

  /// Tight extent of the drawn shape.
  Box extent() const { return {center.x - radius, center.y - radius, center.x + radius, center.y + radius}; }
};

struct Canvas {
  int height = 64;
  int width = 64;
};

struct SceneSpec {
  std::vector<ObjectSpec> objects;
  Canvas canvas;
  std::uint64_t seed = 0;
};

struct Region {
  Box box;
  std::string caption;
  std::vector<int> member_ids;
};

struct Layout {
  std::vector<Region> regions;
  std::size_t size() const { return regions.size(); }
};

struct SceneConfig {
  Canvas canvas;
  int min_objects = 3;
  int max_objects = 8;
  double small_radius = 0.07;
  double large_radius = 0.11;
  double min_separation = 0.2;
  int max_retries = 1000;
  double box_padding = 0.06;
  double group_threshold = 0.35;
  double group_probability = 0.5;
  double texture_mention_probability = 0.5;
  int max_regions = 6;

  double radius_of(Size s) const { return s == Size::small ? small_radius : large_radius; }
};

/// Raised when rejection sampling cannot place an object.
class PlacementError : public std::runtime_error {
 public:
  PlacementError(int object_index, int retry_limit);
  int object_index() const { return object_index_; }
  int retry_limit() const { return retry_limit_; }

 private:
  int object_index_;
  int retry_limit_;
};

/// H x W x 3 interleaved image with values in [-1, 1].
struct Image {
  int height = 0;
  int width = 0;
  std::vector<float> data;

  float at(int y, int x, int c) const { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  std::vector<std::uint8_t> to_rgb8() const;
  static Image from_rgb8(int height, int width, std::span<const std::uint8_t> rgb);
};

/// Stateless seed mixing; the same (seed, stream) always maps to the same value.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

SceneSpec sample_scene(std::uint64_t seed, const SceneConfig& config = {});

Image render_scene(const SceneSpec& scene);

/// Planar relation of `a` with respect to `b` along the dominant axis of their offset.
Relation relation_between(const ObjectSpec& a, const ObjectSpec& b);

/// Caption for one object or an ordered pair; texture is mentioned with
/// probability `texture_mention_probability` per object.
std::string describe_region(std::span<const ObjectSpec> objects, std::optional<Relation> relation,
                            std::mt19937_64& rng, double texture_mention_probability);

struct ObjectDescription {
  Size size = Size::small;
  Color color = Color::red;
  std::optional<Texture> texture;
  Shape shape = Shape::circle;
  friend bool operator==(const ObjectDescription&, const ObjectDescription&) = default;
};

struct ParsedCaption {
  std::vector<ObjectDescription> objects;
  std::optional<Relation> relation;
};

/// Inverse of describe_region. Returns nullopt for text outside the grammar.
std::optional<ParsedCaption> parse_caption(std::string_view caption);

/// Pads `box` by `padding` per side and clips to the unit square.
Box pad_and_clip(const Box& box, double padding);
Box union_box(const Box& a, const Box& b);

Layout build_layout(const SceneSpec& scene, std::mt19937_64& rng, const SceneConfig& config = {});

}  // namespace dtc::scene
