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

#include <torch/torch.h>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dtc/dataset.hpp"
#include "dtc/text.hpp"

namespace dtc::data {

struct RegionItem {
  scene::Box box;
  std::string caption;
  text::TokenSeq tokens;
  std::optional<scene::ObjectSpec> object;  // set for single-object regions
};

/// One split held in memory, captions already tokenized.
struct SampleSet {
  Split split = Split::train;
  std::int64_t resolution = 64;
  torch::Tensor pixels;  // [N, H, W, 3] uint8 at the dataset's canvas size
  std::vector<std::vector<RegionItem>> regions;
  std::vector<std::string> scene_text;
  std::vector<text::TokenSeq> scene_tokens;

  std::int64_t size() const { return static_cast<std::int64_t>(regions.size()); }
};

/// All captions of a scene joined by single spaces.
std::string scene_description(const scene::Layout& layout);

SampleSet load_split(const DatasetManifest& manifest, Split split, const text::Vocabulary& vocab,
                     std::int64_t resolution, int max_tokens, int scene_max_tokens);

/// Images as [B, 3, R, R] floats in [-1, 1], resized to the set's resolution.
torch::Tensor images_at(const SampleSet& set, std::span<const std::int64_t> indices);
torch::Tensor to_network_images(const torch::Tensor& pixels, std::int64_t resolution);

struct Batch {
  std::vector<std::int64_t> indices;
  torch::Tensor images;     // [N, 3, R, R]
  torch::Tensor boxes;      // [N, M, 4]
  torch::Tensor valid;      // [N, M] bool
  torch::Tensor token_ids;  // [N, M, T]
  torch::Tensor lengths;    // [N, M]; 0 on padding
  std::vector<std::vector<std::string>> captions;
  torch::Tensor scene_ids;      // [N, T_scene]
  torch::Tensor scene_lengths;  // [N]

  std::int64_t num_regions() const { return valid.sum().item<std::int64_t>(); }
  /// Region captions in flattened (row-major valid) order.
  std::vector<std::string> flat_captions() const;
};

/// Keeps at most `max_regions` per image, chosen uniformly without
/// replacement from `seed`; original order is preserved.
std::vector<int> subselect_regions(std::size_t count, std::size_t max_regions, std::uint64_t seed);

Batch make_batch(const SampleSet& set, std::span<const std::int64_t> indices, std::int64_t max_regions,
                 std::uint64_t seed);

/// Random permutation without fixed points (a single cycle), n >= 2.
std::vector<std::int64_t> derangement(std::int64_t n, std::uint64_t seed);

/// Epoch order of `n` samples; depends only on (seed, epoch).
std::vector<std::int64_t> epoch_order(std::int64_t n, std::uint64_t seed, std::int64_t epoch);

}  // namespace dtc::data
