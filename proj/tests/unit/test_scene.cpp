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


#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include <nlohmann/json.hpp>

#include "dtc/dataset.hpp"
#include "dtc/scene.hpp"
#include "test_util.hpp"

using namespace dtc::scene;

namespace {

ObjectSpec make_object(Shape shape, Color color, Size size, Texture texture, double x, double y) {
  ObjectSpec o;
  o.shape = shape;
  o.color = color;
  o.size = size;
  o.texture = texture;
  o.center = {x, y};
  o.radius = SceneConfig{}.radius_of(size);
  return o;
}

bool same_scene(const SceneSpec& a, const SceneSpec& b) {
  if (a.objects.size() != b.objects.size()) return false;
  for (std::size_t i = 0; i < a.objects.size(); ++i) {
    const auto& p = a.objects[i];
    const auto& q = b.objects[i];
    if (p.shape != q.shape || p.color != q.color || p.size != q.size || p.texture != q.texture) return false;
    if (p.center.x != q.center.x || p.center.y != q.center.y || p.radius != q.radius) return false;
  }
  return true;
}

}  // namespace

TEST_SUITE("scene") {
  TEST_CASE("seed 7 yields between three and eight objects, reproducibly") {
    const SceneSpec a = sample_scene(7);
    CHECK(a.objects.size() >= 3);
    CHECK(a.objects.size() <= 8);
    CHECK(same_scene(a, sample_scene(7)));
    CHECK_FALSE(same_scene(a, sample_scene(8)));
  }

  TEST_CASE("sampled scenes respect separation and bounds") {
    const SceneConfig cfg;
    std::set<std::size_t> counts;
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
      const SceneSpec s = sample_scene(seed, cfg);
      counts.insert(s.objects.size());
      for (std::size_t i = 0; i < s.objects.size(); ++i) {
        const auto& o = s.objects[i];
        REQUIRE(o.radius > 0);
        REQUIRE(o.center.x - o.radius >= 0.0);
        REQUIRE(o.center.x + o.radius <= 1.0);
        REQUIRE(o.center.y - o.radius >= 0.0);
        REQUIRE(o.center.y + o.radius <= 1.0);
        for (std::size_t j = i + 1; j < s.objects.size(); ++j) {
          const double d = std::hypot(o.center.x - s.objects[j].center.x, o.center.y - s.objects[j].center.y);
          REQUIRE(d >= cfg.min_separation);
        }
      }
    }
    // Every count in [3, 8] shows up over a thousand draws.
    CHECK(counts == std::set<std::size_t>{3, 4, 5, 6, 7, 8});
  }

  TEST_CASE("crowded configuration reports the retry limit") {
    SceneConfig cfg;
    cfg.min_objects = 8;
    cfg.max_objects = 8;
    cfg.min_separation = 0.7;
    cfg.max_retries = 37;
    try {
      sample_scene(3, cfg);
      FAIL("expected PlacementError");
    } catch (const PlacementError& e) {
      CHECK(e.retry_limit() == 37);
      CHECK(e.object_index() >= 1);
      CHECK(std::string(e.what()).find("37") != std::string::npos);
    }
  }

  TEST_CASE("empty scene renders as uniform background") {
    SceneSpec s;
    s.canvas = {32, 48};
    const Image img = render_scene(s);
    REQUIRE(img.height == 32);
    REQUIRE(img.width == 48);
    const auto rgb = img.to_rgb8();
    const Rgb bg = background_rgb();
    for (std::size_t i = 0; i < rgb.size(); ++i) REQUIRE(rgb[i] == bg[i % 3]);
    CHECK(bg[0] == bg[1]);
    CHECK(bg[1] == bg[2]);
  }

  TEST_CASE("large red square at the centre paints the centre pixel red") {
    SceneSpec s;
    s.objects.push_back(make_object(Shape::square, Color::red, Size::large, Texture::solid, 0.5, 0.5));
    const Image img = render_scene(s);
    const Rgb red = color_rgb(Color::red);
    for (int c = 0; c < 3; ++c) CHECK(img.at(32, 32, c) == doctest::Approx(to_unit(red[c])));
    const auto once = img.to_rgb8();
    CHECK(once == render_scene(s).to_rgb8());
  }

  TEST_CASE("later objects are drawn on top") {
    SceneSpec s;
    s.objects.push_back(make_object(Shape::square, Color::red, Size::large, Texture::solid, 0.5, 0.5));
    s.objects.push_back(make_object(Shape::square, Color::blue, Size::small, Texture::solid, 0.5, 0.5));
    const Image img = render_scene(s);
    const Rgb blue = color_rgb(Color::blue);
    for (int c = 0; c < 3; ++c) CHECK(img.at(32, 32, c) == doctest::Approx(to_unit(blue[c])));
  }

  TEST_CASE("outlined shapes leave their interior unpainted") {
    SceneSpec s;
    s.objects.push_back(make_object(Shape::circle, Color::green, Size::large, Texture::outlined, 0.5, 0.5));
    const auto rgb = render_scene(s).to_rgb8();
    const Rgb bg = background_rgb();
    const std::size_t centre = (32 * 64 + 32) * 3;
    CHECK(rgb[centre] == bg[0]);
    int painted = 0;
    const Rgb green = color_rgb(Color::green);
    for (std::size_t i = 0; i < rgb.size(); i += 3) painted += rgb[i] == green[0] && rgb[i + 1] == green[1];
    CHECK(painted > 0);
  }

  TEST_CASE("singleton caption with texture always mentioned") {
    std::mt19937_64 rng(1);
    const auto o = make_object(Shape::circle, Color::red, Size::small, Texture::solid, 0.3, 0.3);
    CHECK(describe_region(std::span(&o, 1), std::nullopt, rng, 1.0) == "a small red solid circle");
    CHECK(describe_region(std::span(&o, 1), std::nullopt, rng, 0.0) == "a small red circle");
  }

  TEST_CASE("pair relations follow the dominant axis") {
    std::mt19937_64 rng(2);
    const auto a = make_object(Shape::square, Color::blue, Size::large, Texture::solid, 0.2, 0.50);
    const auto b = make_object(Shape::triangle, Color::yellow, Size::small, Texture::outlined, 0.6, 0.52);
    const std::array<ObjectSpec, 2> pair = {a, b};
    REQUIRE(relation_between(a, b) == Relation::left_of);
    const std::string caption = describe_region(pair, Relation::left_of, rng, 1.0);
    CHECK(caption == "a large blue solid square left of a small yellow outlined triangle");
    CHECK_THROWS_AS(describe_region(pair, Relation::right_of, rng, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(describe_region(pair, std::nullopt, rng, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(describe_region(std::span(&a, 1), Relation::above, rng, 1.0), std::invalid_argument);

    const auto c = make_object(Shape::circle, Color::cyan, Size::small, Texture::solid, 0.21, 0.9);
    CHECK(relation_between(a, c) == Relation::above);
    CHECK(relation_between(c, a) == Relation::below);
    CHECK(relation_between(b, a) == Relation::right_of);
  }

  TEST_CASE("captions parse back to their attributes") {
    std::mt19937_64 rng(11);
    const SceneConfig cfg;
    int checked = 0;
    for (std::uint64_t seed = 0; checked < 10000; ++seed) {
      const SceneSpec s = sample_scene(seed, cfg);
      const Layout layout = build_layout(s, rng, cfg);
      for (const Region& r : layout.regions) {
        const auto parsed = parse_caption(r.caption);
        REQUIRE_MESSAGE(parsed.has_value(), r.caption);
        REQUIRE(parsed->objects.size() == r.member_ids.size());
        for (std::size_t k = 0; k < r.member_ids.size(); ++k) {
          const ObjectSpec& o = s.objects[r.member_ids[k]];
          const ObjectDescription& d = parsed->objects[k];
          REQUIRE(d.shape == o.shape);
          REQUIRE(d.color == o.color);
          REQUIRE(d.size == o.size);
          if (d.texture) REQUIRE(*d.texture == o.texture);
        }
        if (r.member_ids.size() == 2) {
          REQUIRE(parsed->relation.has_value());
          REQUIRE(*parsed->relation == relation_between(s.objects[r.member_ids[0]], s.objects[r.member_ids[1]]));
        } else {
          REQUIRE_FALSE(parsed->relation.has_value());
        }
        ++checked;
      }
    }
    CHECK_FALSE(parse_caption("a huge red circle").has_value());
    CHECK_FALSE(parse_caption("a small red circle near a large blue square").has_value());
    CHECK_FALSE(parse_caption("").has_value());
  }

  TEST_CASE("distant objects stay singletons") {
    SceneConfig cfg;
    cfg.group_probability = 1.0;
    SceneSpec s;
    s.objects.push_back(make_object(Shape::circle, Color::red, Size::small, Texture::solid, 0.1, 0.1));
    s.objects.push_back(make_object(Shape::square, Color::blue, Size::small, Texture::solid, 0.9, 0.9));
    for (int seed = 0; seed < 20; ++seed) {
      std::mt19937_64 rng(seed);
      const Layout layout = build_layout(s, rng, cfg);
      REQUIRE(layout.size() == 2);
      for (const Region& r : layout.regions) CHECK(r.member_ids.size() == 1);
    }
  }

  TEST_CASE("grouped pair box is the padded union of member extents") {
    SceneConfig cfg;
    cfg.group_probability = 1.0;
    SceneSpec s;
    s.objects.push_back(make_object(Shape::circle, Color::red, Size::large, Texture::solid, 0.4, 0.45));
    s.objects.push_back(make_object(Shape::square, Color::blue, Size::small, Texture::solid, 0.62, 0.5));
    std::mt19937_64 rng(5);
    const Layout layout = build_layout(s, rng, cfg);
    REQUIRE(layout.size() == 1);
    const Region& r = layout.regions[0];
    REQUIRE(r.member_ids.size() == 2);
    double x1 = 1, y1 = 1, x2 = 0, y2 = 0;
    for (const auto& o : s.objects) {
      x1 = std::min(x1, o.center.x - o.radius);
      y1 = std::min(y1, o.center.y - o.radius);
      x2 = std::max(x2, o.center.x + o.radius);
      y2 = std::max(y2, o.center.y + o.radius);
    }
    const double p = cfg.box_padding;
    CHECK(r.box.x1 == doctest::Approx(std::max(0.0, x1 - p)).epsilon(1e-12));
    CHECK(r.box.y1 == doctest::Approx(std::max(0.0, y1 - p)).epsilon(1e-12));
    CHECK(r.box.x2 == doctest::Approx(std::min(1.0, x2 + p)).epsilon(1e-12));
    CHECK(r.box.y2 == doctest::Approx(std::min(1.0, y2 + p)).epsilon(1e-12));
  }

  TEST_CASE("layouts partition objects into covering regions") {
    const SceneConfig cfg;
    std::mt19937_64 rng(99);
    int pairs = 0;
    int singles = 0;
    for (std::uint64_t seed = 0; seed < 500; ++seed) {
      const SceneSpec s = sample_scene(seed, cfg);
      const Layout layout = build_layout(s, rng, cfg);
      REQUIRE(layout.size() >= 1);
      REQUIRE(static_cast<int>(layout.size()) <= cfg.max_regions);
      std::vector<int> seen(s.objects.size(), 0);
      for (const Region& r : layout.regions) {
        REQUIRE(r.box.valid());
        REQUIRE_FALSE(r.caption.empty());
        REQUIRE((r.member_ids.size() == 1 || r.member_ids.size() == 2));
        (r.member_ids.size() == 2 ? pairs : singles)++;
        for (int id : r.member_ids) {
          ++seen[id];
          const Box e = s.objects[id].extent();
          REQUIRE(r.box.contains(e));
        }
      }
      for (int c : seen) REQUIRE(c == 1);
    }
    CHECK(pairs > 0);
    CHECK(singles > 0);
  }

  TEST_CASE("derived seeds are stable and stream-separated") {
    CHECK(derive_seed(1, 2) == derive_seed(1, 2));
    CHECK(derive_seed(1, 2) != derive_seed(1, 3));
    CHECK(derive_seed(1, 2) != derive_seed(2, 2));
  }
}

TEST_SUITE("dataset") {
  TEST_CASE("builds are deterministic with exact split sizes") {
    dtc::testing::TempDir a("ds_a");
    dtc::testing::TempDir b("ds_b");
    const auto ma = dtc::data::build_dataset(100, a.path(), 1);
    dtc::data::build_dataset(100, b.path(), 1);
    using dtc::data::Split;
    CHECK(ma.records(Split::train).size() == 80);
    CHECK(ma.records(Split::val).size() == 10);
    CHECK(ma.records(Split::test).size() == 10);
    CHECK(ma.total_records() == 100);

    for (const char* name : {"dataset.json", "train.jsonl", "val.jsonl", "test.jsonl"}) {
      CHECK_MESSAGE(dtc::testing::slurp(a / name) == dtc::testing::slurp(b / name), name);
    }
    std::set<std::string> paths;
    for (const auto& [split, recs] : ma.splits) {
      for (const auto& rec : recs) {
        REQUIRE(std::filesystem::exists(a.path() / rec.image));
        REQUIRE(dtc::testing::slurp(a.path() / rec.image) == dtc::testing::slurp(b.path() / rec.image));
        paths.insert(rec.image);
      }
    }
    CHECK(paths.size() == 100);
  }

  TEST_CASE("region totals recount from the jsonl files") {
    dtc::testing::TempDir dir("ds_count");
    const auto m = dtc::data::build_dataset(60, dir.path(), 4);
    std::size_t from_manifest = 0;
    for (const auto& [split, recs] : m.splits) {
      for (const auto& rec : recs) from_manifest += rec.layout.size();
    }
    std::size_t from_files = 0;
    std::size_t lines = 0;
    for (const char* name : {"train.jsonl", "val.jsonl", "test.jsonl"}) {
      std::istringstream in(dtc::testing::slurp(dir / name));
      std::string line;
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto j = nlohmann::json::parse(line);
        REQUIRE(j.contains("image"));
        REQUIRE(j.contains("seed"));
        REQUIRE(j.contains("objects"));
        for (const auto& r : j.at("regions")) {
          REQUIRE(r.at("box").size() == 4);
          REQUIRE(r.at("caption").is_string());
          REQUIRE(r.at("members").is_array());
        }
        from_files += j.at("regions").size();
        ++lines;
      }
    }
    CHECK(lines == 60);
    CHECK(from_files == from_manifest);
    const auto meta = nlohmann::json::parse(dtc::testing::slurp(dir / "dataset.json"));
    CHECK(meta.at("counts").at("train").get<int>() == 48);
  }

  TEST_CASE("manifest reload matches the build") {
    dtc::testing::TempDir dir("ds_reload");
    const auto built = dtc::data::build_dataset(20, dir.path(), 9);
    const auto loaded = dtc::data::load_dataset(dir.path());
    CHECK(loaded.seed == 9);
    CHECK(loaded.version == dtc::data::kManifestVersion);
    for (const auto& [split, recs] : built.splits) {
      const auto& other = loaded.records(split);
      REQUIRE(other.size() == recs.size());
      for (std::size_t i = 0; i < recs.size(); ++i) {
        CHECK(other[i].image == recs[i].image);
        CHECK(other[i].seed == recs[i].seed);
        CHECK(same_scene(other[i].scene, recs[i].scene));
        REQUIRE(other[i].layout.size() == recs[i].layout.size());
        for (std::size_t k = 0; k < recs[i].layout.size(); ++k) {
          CHECK(other[i].layout.regions[k].caption == recs[i].layout.regions[k].caption);
          CHECK(other[i].layout.regions[k].box == recs[i].layout.regions[k].box);
          CHECK(other[i].layout.regions[k].member_ids == recs[i].layout.regions[k].member_ids);
        }
      }
    }
  }

  TEST_CASE("png round trip preserves pixels") {
    const SceneSpec s = sample_scene(21);
    const Image img = render_scene(s);
    const Image back = dtc::data::decode_png(dtc::data::encode_png(img));
    CHECK(back.height == img.height);
    CHECK(back.to_rgb8() == img.to_rgb8());
    CHECK_THROWS(dtc::data::decode_png("not a png"));
  }

  TEST_CASE("invalid sizes are rejected") {
    dtc::testing::TempDir dir("ds_bad");
    CHECK_THROWS(dtc::data::build_dataset(0, dir.path(), 1));
  }
}
