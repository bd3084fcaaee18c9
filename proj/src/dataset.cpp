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

#include "dtc/dataset.hpp"

#include <png.h>

#include <csetjmp>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace dtc::data {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::array<std::string_view, 3> kSplitNames = {"train", "val", "test"};

void png_write_to_string(png_structp png, png_bytep data, png_size_t length) {
  auto* out = static_cast<std::string*>(png_get_io_ptr(png));
  out->append(reinterpret_cast<const char*>(data), length);
}

void png_flush_noop(png_structp) {}

// Records the message instead of printing it; the caller rethrows it.
void png_error_to_string(png_structp png, png_const_charp msg) {
  *static_cast<std::string*>(png_get_error_ptr(png)) = msg;
  png_longjmp(png, 1);
}

void png_warning_ignore(png_structp, png_const_charp) {}

struct ReadCursor {
  std::string_view bytes;
  std::size_t offset = 0;
};

void png_read_from_view(png_structp png, png_bytep data, png_size_t length) {
  auto* cur = static_cast<ReadCursor*>(png_get_io_ptr(png));
  if (cur->offset + length > cur->bytes.size()) png_error(png, "truncated PNG stream");
  std::memcpy(data, cur->bytes.data() + cur->offset, length);
  cur->offset += length;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json region_to_json(const scene::Region& r) {
  return {{"box", {r.box.x1, r.box.y1, r.box.x2, r.box.y2}}, {"caption", r.caption}, {"members", r.member_ids}};
}

scene::Region region_from_json(const json& j) {
  scene::Region r;
  const auto& b = j.at("box");
  r.box = {b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(), b.at(3).get<double>()};
  r.caption = j.at("caption").get<std::string>();
  r.member_ids = j.at("members").get<std::vector<int>>();
  return r;
}

}  // namespace

std::string_view to_string(Split s) { return kSplitNames[static_cast<std::size_t>(s)]; }

Split parse_split(std::string_view name) {
  for (std::size_t i = 0; i < kSplitNames.size(); ++i) {
    if (kSplitNames[i] == name) return static_cast<Split>(i);
  }
  throw std::invalid_argument("unknown split '" + std::string(name) + "'");
}

const std::vector<Record>& DatasetManifest::records(Split s) const {
  static const std::vector<Record> empty;
  auto it = splits.find(s);
  return it == splits.end() ? empty : it->second;
}

std::size_t DatasetManifest::total_records() const {
  std::size_t n = 0;
  for (const auto& [_, recs] : splits) n += recs.size();
  return n;
}

json to_json(const scene::ObjectSpec& obj) {
  return {{"shape", scene::to_string(obj.shape)},
          {"color", scene::to_string(obj.color)},
          {"size", scene::to_string(obj.size)},
          {"texture", scene::to_string(obj.texture)},
          {"center", {obj.center.x, obj.center.y}},
          {"radius", obj.radius}};
}

scene::ObjectSpec object_from_json(const json& j) {
  scene::ObjectSpec obj;
  auto req = [](auto opt, const char* what) {
    if (!opt) throw std::runtime_error(std::string("manifest: bad ") + what);
    return *opt;
  };
  obj.shape = req(scene::parse_shape(j.at("shape").get<std::string>()), "shape");
  obj.color = req(scene::parse_color(j.at("color").get<std::string>()), "color");
  obj.size = req(scene::parse_size(j.at("size").get<std::string>()), "size");
  obj.texture = req(scene::parse_texture(j.at("texture").get<std::string>()), "texture");
  obj.center = {j.at("center").at(0).get<double>(), j.at("center").at(1).get<double>()};
  obj.radius = j.at("radius").get<double>();
  return obj;
}

json to_json(const Record& rec) {
  json regions = json::array();
  for (const auto& r : rec.layout.regions) regions.push_back(region_to_json(r));
  json objects = json::array();
  for (const auto& o : rec.scene.objects) objects.push_back(to_json(o));
  return {{"image", rec.image}, {"seed", rec.seed}, {"regions", regions}, {"objects", objects}};
}

Record record_from_json(const json& j, const scene::Canvas& canvas) {
  Record rec;
  rec.image = j.at("image").get<std::string>();
  rec.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& r : j.at("regions")) rec.layout.regions.push_back(region_from_json(r));
  for (const auto& o : j.at("objects")) rec.scene.objects.push_back(object_from_json(o));
  rec.scene.canvas = canvas;
  rec.scene.seed = rec.seed;
  return rec;
}

DatasetManifest build_dataset(int n_images, const fs::path& out, std::uint64_t seed, const SplitFractions& fractions,
                              const scene::SceneConfig& config) {
  if (n_images < 1) throw std::invalid_argument("build_dataset: n_images must be >= 1");
  if (fractions.train < 0 || fractions.val < 0 || fractions.test < 0) {
    throw std::invalid_argument("build_dataset: split fractions must be non-negative");
  }
  const double total = fractions.train + fractions.val + fractions.test;
  const int n_train = static_cast<int>(std::floor(n_images * fractions.train / total + 1e-9));
  const int n_val = static_cast<int>(std::floor(n_images * fractions.val / total + 1e-9));

  DatasetManifest manifest;
  manifest.root = out;
  manifest.seed = seed;
  for (std::size_t s = 0; s < kSplitNames.size(); ++s) {
    fs::create_directories(out / "images" / kSplitNames[s]);
    manifest.splits[static_cast<Split>(s)];
  }

  // Each image depends only on (seed, index).
  for (int index = 0; index < n_images; ++index) {
    const Split split = index < n_train ? Split::train : (index < n_train + n_val ? Split::val : Split::test);
    Record rec;
    rec.seed = scene::derive_seed(seed, static_cast<std::uint64_t>(index));
    rec.scene = scene::sample_scene(rec.seed, config);
    std::mt19937_64 layout_rng(scene::derive_seed(rec.seed, 1));
    rec.layout = scene::build_layout(rec.scene, layout_rng, config);
    std::ostringstream name;
    name << "images/" << to_string(split) << "/" << std::setw(6) << std::setfill('0') << index << ".png";
    rec.image = name.str();
    write_png(out / rec.image, scene::render_scene(rec.scene));
    manifest.splits[split].push_back(std::move(rec));
  }

  json counts = json::object();
  for (const auto& [split, recs] : manifest.splits) {
    const fs::path path = out / (std::string(to_string(split)) + ".jsonl");
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("build_dataset: cannot write " + path.string());
    for (const auto& rec : recs) f << to_json(rec).dump() << '\n';
    if (!f) throw std::runtime_error("build_dataset: write failed for " + path.string());
    counts[std::string(to_string(split))] = recs.size();
  }
  json meta = {{"format_version", kManifestVersion},
               {"seed", seed},
               {"n_images", n_images},
               {"canvas", {config.canvas.height, config.canvas.width}},
               {"counts", counts}};
  std::ofstream mf(out / "dataset.json", std::ios::binary | std::ios::trunc);
  mf << meta.dump(2) << '\n';
  if (!mf) throw std::runtime_error("build_dataset: cannot write dataset.json");
  return manifest;
}

DatasetManifest load_dataset(const fs::path& root) {
  const json meta = json::parse(read_file(root / "dataset.json"));
  if (meta.at("format_version").get<int>() != kManifestVersion) {
    throw std::runtime_error("load_dataset: unsupported manifest version");
  }
  DatasetManifest manifest;
  manifest.root = root;
  manifest.seed = meta.at("seed").get<std::uint64_t>();
  const scene::Canvas canvas{meta.at("canvas").at(0).get<int>(), meta.at("canvas").at(1).get<int>()};
  for (std::size_t s = 0; s < kSplitNames.size(); ++s) {
    const Split split = static_cast<Split>(s);
    auto& recs = manifest.splits[split];
    std::ifstream f(root / (std::string(kSplitNames[s]) + ".jsonl"));
    if (!f) throw std::runtime_error("load_dataset: missing " + std::string(kSplitNames[s]) + ".jsonl");
    std::string line;
    while (std::getline(f, line)) {
      if (!line.empty()) recs.push_back(record_from_json(json::parse(line), canvas));
    }
  }
  return manifest;
}

std::string encode_png(const scene::Image& image) {
  const std::vector<std::uint8_t> rgb = image.to_rgb8();
  std::string out;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("png: cannot create write struct");
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("png: encoding failed");
  }
  png_set_write_fn(png, &out, png_write_to_string, png_flush_noop);
  png_set_IHDR(png, info, image.width, image.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < image.height; ++y) {
    png_write_row(png, const_cast<png_bytep>(rgb.data() + static_cast<std::size_t>(y) * image.width * 3));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

void write_png(const fs::path& path, const scene::Image& image) {
  const std::string bytes = encode_png(image);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("write failed for " + path.string());
}

scene::Image decode_png(std::string_view bytes) {
  ReadCursor cursor{bytes, 0};
  std::vector<std::uint8_t> rgb;
  int w = 0;
  int h = 0;
  std::string error;
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, &error, png_error_to_string, png_warning_ignore);
  if (!png) throw std::runtime_error("png: cannot create read struct");
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("png: decoding failed" + (error.empty() ? std::string() : ": " + error));
  }
  png_set_read_fn(png, &cursor, png_read_from_view);
  png_read_info(png, info);
  w = static_cast<int>(png_get_image_width(png, info));
  h = static_cast<int>(png_get_image_height(png, info));
  const bool bad_format = png_get_color_type(png, info) != PNG_COLOR_TYPE_RGB || png_get_bit_depth(png, info) != 8;
  if (!bad_format) {
    rgb.resize(static_cast<std::size_t>(w) * h * 3);
    for (int y = 0; y < h; ++y) png_read_row(png, rgb.data() + static_cast<std::size_t>(y) * w * 3, nullptr);
    png_read_end(png, nullptr);
  }
  png_destroy_read_struct(&png, &info, nullptr);
  if (bad_format) throw std::runtime_error("png: expected 8-bit RGB");
  return scene::Image::from_rgb8(h, w, rgb);
}

scene::Image read_png(const fs::path& path) { return decode_png(read_file(path)); }

}  // namespace dtc::data
