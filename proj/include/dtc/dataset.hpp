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

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dtc/scene.hpp"

namespace dtc::data {

enum class Split : std::uint8_t { train, val, test };

std::string_view to_string(Split s);
Split parse_split(std::string_view name);

inline constexpr int kManifestVersion = 1;

struct Record {
  std::string image;  // path relative to the dataset root
  std::uint64_t seed = 0;
  scene::SceneSpec scene;
  scene::Layout layout;
};

struct SplitFractions {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

struct DatasetManifest {
  std::filesystem::path root;
  std::uint64_t seed = 0;
  int version = kManifestVersion;
  std::map<Split, std::vector<Record>> splits;

  const std::vector<Record>& records(Split s) const;
  std::size_t total_records() const;
};

nlohmann::json to_json(const scene::ObjectSpec& obj);
scene::ObjectSpec object_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Record& rec);
Record record_from_json(const nlohmann::json& j, const scene::Canvas& canvas);

/// Renders every image and writes <out>/images/<split>/<index>.png,
/// <out>/<split>.jsonl and <out>/dataset.json.
DatasetManifest build_dataset(int n_images, const std::filesystem::path& out, std::uint64_t seed,
                              const SplitFractions& splits = {}, const scene::SceneConfig& config = {});

DatasetManifest load_dataset(const std::filesystem::path& root);

/// Writes an 8-bit RGB PNG.
void write_png(const std::filesystem::path& path, const scene::Image& image);
/// Encodes an 8-bit RGB PNG into memory.
std::string encode_png(const scene::Image& image);
scene::Image read_png(const std::filesystem::path& path);
scene::Image decode_png(std::string_view bytes);

}  // namespace dtc::data
