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

#include "dtc/scene.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace dtc::scene {

namespace {

constexpr std::array<std::string_view, kNumShapes> kShapeNames = {"circle", "square", "triangle"};
constexpr std::array<std::string_view, kNumColors> kColorNames = {"red",    "green", "blue",  "yellow",
                                                                  "purple", "cyan",  "brown", "orange"};
constexpr std::array<std::string_view, kNumSizes> kSizeNames = {"small", "large"};
constexpr std::array<std::string_view, kNumTextures> kTextureNames = {"solid", "outlined"};
constexpr std::array<std::string_view, 4> kRelationNames = {"left of", "right of", "above", "below"};

constexpr std::array<Rgb, kNumColors> kPalette = {{
    {220, 40, 40},    // red
    {40, 180, 60},    // green
    {40, 80, 220},    // blue
    {240, 220, 40},   // yellow
    {150, 50, 190},   // purple
    {40, 210, 220},   // cyan
    {120, 70, 30},    // brown
    {255, 140, 0},    // orange
}};

// Inner boundary of an outlined shape, as a fraction of the radius.
constexpr double kOutlineInner = 0.55;

template <typename Enum, std::size_t N>
std::optional<Enum> lookup(const std::array<std::string_view, N>& names, std::string_view word) {
  for (std::size_t i = 0; i < N; ++i) {
    if (names[i] == word) return static_cast<Enum>(i);
  }
  return std::nullopt;
}

bool inside_shape(Shape shape, double dx, double dy, double r) {
  switch (shape) {
    case Shape::circle:
      return dx * dx + dy * dy <= r * r;
    case Shape::square:
      return std::abs(dx) <= r && std::abs(dy) <= r;
    case Shape::triangle: {
      // Apex at (0, -r), base from (-r, r) to (r, r).
      if (dy < -r || dy > r) return false;
      const double half_width = r * (dy + r) / (2.0 * r);
      return std::abs(dx) <= half_width;
    }
  }
  return false;
}

bool covers(const ObjectSpec& obj, double px, double py) {
  const double dx = px - obj.center.x;
  const double dy = py - obj.center.y;
  if (!inside_shape(obj.shape, dx, dy, obj.radius)) return false;
  if (obj.texture == Texture::solid) return true;
  return !inside_shape(obj.shape, dx, dy, obj.radius * kOutlineInner);
}

double distance(const Point& a, const Point& b) { return std::hypot(a.x - b.x, a.y - b.y); }

std::string describe_object(const ObjectSpec& obj, std::mt19937_64& rng, double texture_p) {
  std::bernoulli_distribution mention(texture_p);
  std::string out;
  out += to_string(obj.size);
  out += ' ';
  out += to_string(obj.color);
  out += ' ';
  if (mention(rng)) {
    out += to_string(obj.texture);
    out += ' ';
  }
  out += to_string(obj.shape);
  return out;
}

std::vector<std::string_view> split_words(std::string_view text) {
  std::vector<std::string_view> words;
  std::size_t pos = 0;
  while (pos < text.size()) {
    while (pos < text.size() && text[pos] == ' ') ++pos;
    const std::size_t start = pos;
    while (pos < text.size() && text[pos] != ' ') ++pos;
    if (pos > start) words.push_back(text.substr(start, pos - start));
  }
  return words;
}

// Parses "{size} {color} [{texture}] {shape}" starting at words[pos].
std::optional<ObjectDescription> parse_object(std::span<const std::string_view> words, std::size_t& pos) {
  ObjectDescription d;
  if (pos >= words.size()) return std::nullopt;
  auto size = parse_size(words[pos++]);
  if (!size || pos >= words.size()) return std::nullopt;
  auto color = parse_color(words[pos++]);
  if (!color || pos >= words.size()) return std::nullopt;
  d.size = *size;
  d.color = *color;
  if (auto tex = parse_texture(words[pos])) {
    d.texture = *tex;
    if (++pos >= words.size()) return std::nullopt;
  }
  auto shape = parse_shape(words[pos++]);
  if (!shape) return std::nullopt;
  d.shape = *shape;
  return d;
}

}  // namespace

std::string_view to_string(Shape s) { return kShapeNames[static_cast<std::size_t>(s)]; }
std::string_view to_string(Color c) { return kColorNames[static_cast<std::size_t>(c)]; }
std::string_view to_string(Size s) { return kSizeNames[static_cast<std::size_t>(s)]; }
std::string_view to_string(Texture t) { return kTextureNames[static_cast<std::size_t>(t)]; }
std::string_view to_string(Relation r) { return kRelationNames[static_cast<std::size_t>(r)]; }

std::optional<Shape> parse_shape(std::string_view w) { return lookup<Shape>(kShapeNames, w); }
std::optional<Color> parse_color(std::string_view w) { return lookup<Color>(kColorNames, w); }
std::optional<Size> parse_size(std::string_view w) { return lookup<Size>(kSizeNames, w); }
std::optional<Texture> parse_texture(std::string_view w) { return lookup<Texture>(kTextureNames, w); }

Rgb color_rgb(Color c) { return kPalette[static_cast<std::size_t>(c)]; }
Rgb background_rgb() { return {128, 128, 128}; }

PlacementError::PlacementError(int object_index, int retry_limit)
    : std::runtime_error("scene placement failed for object " + std::to_string(object_index) + " after " +
                         std::to_string(retry_limit) + " retries (max_retries=" + std::to_string(retry_limit) +
                         ")"),
      object_index_(object_index),
      retry_limit_(retry_limit) {}

std::vector<std::uint8_t> Image::to_rgb8() const {
  std::vector<std::uint8_t> out(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const float v = std::clamp((data[i] + 1.0f) * 127.5f, 0.0f, 255.0f);
    out[i] = static_cast<std::uint8_t>(std::lround(v));
  }
  return out;
}

Image Image::from_rgb8(int height, int width, std::span<const std::uint8_t> rgb) {
  if (rgb.size() != static_cast<std::size_t>(height) * width * 3) {
    throw std::invalid_argument("Image::from_rgb8: buffer size does not match dimensions");
  }
  Image img{height, width, std::vector<float>(rgb.size())};
  std::transform(rgb.begin(), rgb.end(), img.data.begin(), to_unit);
  return img;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer over the combined words.
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

SceneSpec sample_scene(std::uint64_t seed, const SceneConfig& config) {
  if (config.min_objects < 1 || config.max_objects < config.min_objects) {
    throw std::invalid_argument("sample_scene: invalid object count range");
  }
  if (!(0.0 < config.small_radius && config.small_radius < config.large_radius && config.large_radius < 0.5)) {
    throw std::invalid_argument("sample_scene: radii must satisfy 0 < small < large < 0.5");
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> count_dist(config.min_objects, config.max_objects);
  std::uniform_int_distribution<int> shape_dist(0, kNumShapes - 1);
  std::uniform_int_distribution<int> color_dist(0, kNumColors - 1);
  std::uniform_int_distribution<int> size_dist(0, kNumSizes - 1);
  std::uniform_int_distribution<int> texture_dist(0, kNumTextures - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  SceneSpec scene;
  scene.canvas = config.canvas;
  scene.seed = seed;
  const int count = count_dist(rng);
  scene.objects.reserve(count);
  for (int i = 0; i < count; ++i) {
    ObjectSpec obj;
    obj.shape = static_cast<Shape>(shape_dist(rng));
    obj.color = static_cast<Color>(color_dist(rng));
    obj.size = static_cast<Size>(size_dist(rng));
    obj.texture = static_cast<Texture>(texture_dist(rng));
    obj.radius = config.radius_of(obj.size);
    bool placed = false;
    for (int attempt = 0; attempt < config.max_retries && !placed; ++attempt) {
      obj.center.x = obj.radius + unit(rng) * (1.0 - 2.0 * obj.radius);
      obj.center.y = obj.radius + unit(rng) * (1.0 - 2.0 * obj.radius);
      placed = std::none_of(scene.objects.begin(), scene.objects.end(), [&](const ObjectSpec& other) {
        return distance(other.center, obj.center) < config.min_separation;
      });
    }
    if (!placed) throw PlacementError(i, config.max_retries);
    scene.objects.push_back(obj);
  }
  return scene;
}

Image render_scene(const SceneSpec& scene) {
  const int h = scene.canvas.height;
  const int w = scene.canvas.width;
  std::vector<std::uint8_t> rgb(static_cast<std::size_t>(h) * w * 3);
  const Rgb bg = background_rgb();
  for (std::size_t i = 0; i < rgb.size(); i += 3) std::copy(bg.begin(), bg.end(), rgb.begin() + i);

  for (const ObjectSpec& obj : scene.objects) {
    const Rgb fill = color_rgb(obj.color);
    const int x0 = std::max(0, static_cast<int>(std::floor((obj.center.x - obj.radius) * w)));
    const int x1 = std::min(w - 1, static_cast<int>(std::ceil((obj.center.x + obj.radius) * w)));
    const int y0 = std::max(0, static_cast<int>(std::floor((obj.center.y - obj.radius) * h)));
    const int y1 = std::min(h - 1, static_cast<int>(std::ceil((obj.center.y + obj.radius) * h)));
    for (int y = y0; y <= y1; ++y) {
      const double py = (y + 0.5) / h;
      for (int x = x0; x <= x1; ++x) {
        const double px = (x + 0.5) / w;
        if (!covers(obj, px, py)) continue;
        std::copy(fill.begin(), fill.end(), rgb.begin() + (static_cast<std::size_t>(y) * w + x) * 3);
      }
    }
  }
  return Image::from_rgb8(h, w, rgb);
}

Relation relation_between(const ObjectSpec& a, const ObjectSpec& b) {
  const double dx = b.center.x - a.center.x;
  const double dy = b.center.y - a.center.y;
  if (std::abs(dx) >= std::abs(dy)) return dx > 0 ? Relation::left_of : Relation::right_of;
  return dy > 0 ? Relation::above : Relation::below;
}

std::string describe_region(std::span<const ObjectSpec> objects, std::optional<Relation> relation,
                            std::mt19937_64& rng, double texture_mention_probability) {
  if (objects.size() == 1) {
    if (relation) throw std::invalid_argument("describe_region: relation given for a single object");
    return "a " + describe_object(objects[0], rng, texture_mention_probability);
  }
  if (objects.size() != 2) throw std::invalid_argument("describe_region: expected 1 or 2 objects");
  if (!relation) throw std::invalid_argument("describe_region: a pair requires a relation");
  if (*relation != relation_between(objects[0], objects[1])) {
    throw std::invalid_argument("describe_region: relation '" + std::string(to_string(*relation)) +
                                "' is inconsistent with the object centers");
  }
  std::string first = describe_object(objects[0], rng, texture_mention_probability);
  std::string second = describe_object(objects[1], rng, texture_mention_probability);
  return "a " + first + " " + std::string(to_string(*relation)) + " a " + second;
}

std::optional<ParsedCaption> parse_caption(std::string_view caption) {
  const auto words = split_words(caption);
  std::size_t pos = 0;
  if (words.empty() || words[pos++] != "a") return std::nullopt;
  ParsedCaption out;
  auto first = parse_object(words, pos);
  if (!first) return std::nullopt;
  out.objects.push_back(*first);
  if (pos == words.size()) return out;

  // Relation: one or two words, then "a".
  std::string rel = std::string(words[pos++]);
  if ((rel == "left" || rel == "right") && pos < words.size() && words[pos] == "of") {
    rel += " of";
    ++pos;
  }
  const auto relation = lookup<Relation>(kRelationNames, rel);
  if (!relation || pos >= words.size() || words[pos++] != "a") return std::nullopt;
  out.relation = *relation;
  auto second = parse_object(words, pos);
  if (!second || pos != words.size()) return std::nullopt;
  out.objects.push_back(*second);
  return out;
}

Box pad_and_clip(const Box& box, double padding) {
  return {std::max(0.0, box.x1 - padding), std::max(0.0, box.y1 - padding), std::min(1.0, box.x2 + padding),
          std::min(1.0, box.y2 + padding)};
}

Box union_box(const Box& a, const Box& b) {
  return {std::min(a.x1, b.x1), std::min(a.y1, b.y1), std::max(a.x2, b.x2), std::max(a.y2, b.y2)};
}

Layout build_layout(const SceneSpec& scene, std::mt19937_64& rng, const SceneConfig& config) {
  const int n = static_cast<int>(scene.objects.size());
  if (n == 0) throw std::invalid_argument("build_layout: scene has no objects");
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<int> partner(n, -1);
  std::bernoulli_distribution group(config.group_probability);
  auto nearest_free = [&](int i, double max_dist) {
    int best = -1;
    double best_d = max_dist;
    for (int j = 0; j < n; ++j) {
      if (j == i || partner[j] != -1) continue;
      const double d = distance(scene.objects[i].center, scene.objects[j].center);
      if (d < best_d) {
        best_d = d;
        best = j;
      }
    }
    return best;
  };
  for (int i : order) {
    if (partner[i] != -1) continue;
    const int j = nearest_free(i, config.group_threshold);
    if (j >= 0 && group(rng)) {
      partner[i] = j;
      partner[j] = i;
    }
  }
  // Fewer regions than objects may be required: pair the closest leftovers.
  auto region_count = [&] {
    int singles = static_cast<int>(std::count(partner.begin(), partner.end(), -1));
    return singles + (n - singles) / 2;
  };
  while (region_count() > config.max_regions) {
    int best_i = -1, best_j = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) {
      if (partner[i] != -1) continue;
      const int j = nearest_free(i, std::numeric_limits<double>::infinity());
      if (j < 0) continue;
      const double d = distance(scene.objects[i].center, scene.objects[j].center);
      if (d < best_d) {
        best_d = d;
        best_i = i;
        best_j = j;
      }
    }
    if (best_i < 0) throw std::logic_error("build_layout: cannot reduce region count below max_regions");
    partner[best_i] = best_j;
    partner[best_j] = best_i;
  }

  Layout layout;
  std::vector<bool> done(n, false);
  std::bernoulli_distribution coin(0.5);
  for (int i = 0; i < n; ++i) {
    if (done[i]) continue;
    Region region;
    if (partner[i] == -1) {
      region.member_ids = {i};
      region.box = pad_and_clip(scene.objects[i].extent(), config.box_padding);
      region.caption = describe_region(std::span(&scene.objects[i], 1), std::nullopt, rng,
                                       config.texture_mention_probability);
      done[i] = true;
    } else {
      int a = i, b = partner[i];
      if (coin(rng)) std::swap(a, b);
      const std::array<ObjectSpec, 2> pair = {scene.objects[a], scene.objects[b]};
      region.member_ids = {a, b};
      region.box = pad_and_clip(union_box(pair[0].extent(), pair[1].extent()), config.box_padding);
      region.caption = describe_region(pair, relation_between(pair[0], pair[1]), rng,
                                       config.texture_mention_probability);
      done[a] = done[b] = true;
    }
    layout.regions.push_back(std::move(region));
  }
  return layout;
}

}  // namespace dtc::scene
