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

#include "dtc/batch.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <stdexcept>

namespace dtc::data {

namespace F = torch::nn::functional;

std::string scene_description(const scene::Layout& layout) {
  std::string out;
  for (const auto& r : layout.regions) {
    if (!out.empty()) out += ' ';
    out += r.caption;
  }
  return out;
}

SampleSet load_split(const DatasetManifest& manifest, Split split, const text::Vocabulary& vocab,
                     std::int64_t resolution, int max_tokens, int scene_max_tokens) {
  const auto& records = manifest.records(split);
  if (records.empty()) throw std::invalid_argument("load_split: split '" + std::string(to_string(split)) + "' is empty");
  SampleSet set;
  set.split = split;
  set.resolution = resolution;
  const auto first = read_png(manifest.root / records.front().image);
  const auto h = first.height;
  const auto w = first.width;
  set.pixels = torch::empty({static_cast<std::int64_t>(records.size()), h, w, 3}, torch::kUInt8);
  auto* dst = set.pixels.data_ptr<std::uint8_t>();
  const std::size_t stride = static_cast<std::size_t>(h) * w * 3;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& rec = records[i];
    const auto img = i == 0 ? first : read_png(manifest.root / rec.image);
    if (img.height != h || img.width != w) throw std::runtime_error("load_split: mixed image sizes in " + rec.image);
    const auto rgb = img.to_rgb8();
    std::copy(rgb.begin(), rgb.end(), dst + i * stride);

    std::vector<RegionItem> items;
    for (const auto& region : rec.layout.regions) {
      RegionItem item{region.box, region.caption, text::tokenize(region.caption, vocab, max_tokens), std::nullopt};
      if (region.member_ids.size() == 1) item.object = rec.scene.objects.at(region.member_ids.front());
      items.push_back(std::move(item));
    }
    set.regions.push_back(std::move(items));
    set.scene_text.push_back(scene_description(rec.layout));
    set.scene_tokens.push_back(text::tokenize(set.scene_text.back(), vocab, scene_max_tokens));
  }
  return set;
}

torch::Tensor to_network_images(const torch::Tensor& pixels, std::int64_t resolution) {
  auto x = pixels.permute({0, 3, 1, 2}).to(torch::kFloat32).div(127.5).sub(1.0);
  if (x.size(2) != resolution || x.size(3) != resolution) {
    x = F::interpolate(x, F::InterpolateFuncOptions()
                              .size(std::vector<std::int64_t>{resolution, resolution})
                              .mode(torch::kBilinear)
                              .align_corners(false)
                              .antialias(true));
  }
  return x.contiguous();
}

torch::Tensor images_at(const SampleSet& set, std::span<const std::int64_t> indices) {
  const auto idx = torch::tensor(std::vector<std::int64_t>(indices.begin(), indices.end()), torch::kInt64);
  return to_network_images(set.pixels.index_select(0, idx), set.resolution);
}

std::vector<std::string> Batch::flat_captions() const {
  std::vector<std::string> out;
  for (const auto& row : captions) out.insert(out.end(), row.begin(), row.end());
  return out;
}

std::vector<int> subselect_regions(std::size_t count, std::size_t max_regions, std::uint64_t seed) {
  std::vector<int> keep(count);
  std::iota(keep.begin(), keep.end(), 0);
  if (count <= max_regions) return keep;
  std::mt19937_64 rng(seed);
  std::shuffle(keep.begin(), keep.end(), rng);
  keep.resize(max_regions);
  std::sort(keep.begin(), keep.end());
  return keep;
}

Batch make_batch(const SampleSet& set, std::span<const std::int64_t> indices, std::int64_t max_regions,
                 std::uint64_t seed) {
  if (indices.empty()) throw std::invalid_argument("make_batch: no samples");
  if (max_regions < 1) throw std::invalid_argument("make_batch: max_regions must be >= 1");
  Batch b;
  b.indices.assign(indices.begin(), indices.end());
  b.images = images_at(set, indices);
  std::vector<std::vector<int>> kept;
  std::int64_t m = 1;
  for (auto i : indices) {
    const auto& regions = set.regions.at(static_cast<std::size_t>(i));
    if (regions.empty()) throw std::runtime_error("make_batch: sample " + std::to_string(i) + " has no regions");
    kept.push_back(subselect_regions(regions.size(), static_cast<std::size_t>(max_regions),
                                     scene::derive_seed(seed, static_cast<std::uint64_t>(i))));
    m = std::max<std::int64_t>(m, static_cast<std::int64_t>(kept.back().size()));
  }
  const auto n = static_cast<std::int64_t>(indices.size());
  const auto t = static_cast<std::int64_t>(set.regions[static_cast<std::size_t>(indices[0])][0].tokens.ids.size());
  const auto ts = static_cast<std::int64_t>(set.scene_tokens[0].ids.size());
  b.boxes = torch::zeros({n, m, 4});
  b.valid = torch::zeros({n, m}, torch::kBool);
  b.token_ids = torch::zeros({n, m, t}, torch::kInt64);
  b.lengths = torch::zeros({n, m}, torch::kInt64);
  b.scene_ids = torch::zeros({n, ts}, torch::kInt64);
  b.scene_lengths = torch::zeros({n}, torch::kInt64);
  auto boxes = b.boxes.accessor<float, 3>();
  auto valid = b.valid.accessor<bool, 2>();
  auto ids = b.token_ids.accessor<std::int64_t, 3>();
  auto lengths = b.lengths.accessor<std::int64_t, 2>();
  auto scene_ids = b.scene_ids.accessor<std::int64_t, 2>();
  for (std::int64_t r = 0; r < n; ++r) {
    const auto sample = static_cast<std::size_t>(indices[static_cast<std::size_t>(r)]);
    const auto& regions = set.regions[sample];
    std::vector<std::string> captions;
    for (std::size_t j = 0; j < kept[static_cast<std::size_t>(r)].size(); ++j) {
      const auto& item = regions[static_cast<std::size_t>(kept[static_cast<std::size_t>(r)][j])];
      const auto c = static_cast<std::int64_t>(j);
      boxes[r][c][0] = static_cast<float>(item.box.x1);
      boxes[r][c][1] = static_cast<float>(item.box.y1);
      boxes[r][c][2] = static_cast<float>(item.box.x2);
      boxes[r][c][3] = static_cast<float>(item.box.y2);
      valid[r][c] = true;
      for (std::int64_t k = 0; k < t; ++k) ids[r][c][k] = item.tokens.ids[static_cast<std::size_t>(k)];
      lengths[r][c] = item.tokens.valid_length;
      captions.push_back(item.caption);
    }
    b.captions.push_back(std::move(captions));
    const auto& st = set.scene_tokens[sample];
    for (std::int64_t k = 0; k < ts; ++k) scene_ids[r][k] = st.ids[static_cast<std::size_t>(k)];
    b.scene_lengths[r] = st.valid_length;
  }
  return b;
}

std::vector<std::int64_t> derangement(std::int64_t n, std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("derangement: need at least 2 elements");
  std::vector<std::int64_t> p(static_cast<std::size_t>(n));
  std::iota(p.begin(), p.end(), 0);
  std::mt19937_64 rng(seed);
  // Sattolo: uniform over n-cycles, which have no fixed points.
  for (std::int64_t i = n - 1; i > 0; --i) {
    std::uniform_int_distribution<std::int64_t> pick(0, i - 1);
    std::swap(p[static_cast<std::size_t>(i)], p[static_cast<std::size_t>(pick(rng))]);
  }
  return p;
}

std::vector<std::int64_t> epoch_order(std::int64_t n, std::uint64_t seed, std::int64_t epoch) {
  std::vector<std::int64_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(scene::derive_seed(seed, static_cast<std::uint64_t>(epoch)));
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

}  // namespace dtc::data
