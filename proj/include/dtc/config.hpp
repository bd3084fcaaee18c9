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
#include <string>

#include "dtc/losses.hpp"

namespace dtc {

/// Everything that shapes a training run. Serialized as flat `key = value`
/// lines; `#` starts a comment.
struct TrainConfig {
  // data / model shape
  std::int64_t resolution = 64;
  std::int64_t max_regions = 6;
  std::int64_t max_tokens = 16;
  std::int64_t scene_max_tokens = 96;
  std::int64_t word_dim = 128;
  std::int64_t embed_dim = 128;
  std::int64_t z_img_dim = 128;
  std::int64_t z_region_dim = 128;
  std::int64_t gen_base_channels = 256;
  std::int64_t gen_min_channels = 32;
  std::int64_t mask_size = 16;
  std::int64_t disc_base_channels = 32;
  std::int64_t region_dim = 256;
  std::int64_t roi_bins = 4;
  std::int64_t damsm_crop = 32;
  std::int64_t damsm_channels = 32;
  std::int64_t oracle_crop = 24;
  double oracle_window = 0.375;

  // optimization
  std::int64_t batch_size = 16;
  double lr_g = 1e-4;
  double lr_d = 1e-4;
  double lr_damsm = 1e-4;
  double lr_oracle = 1e-3;
  double beta1 = 0.0;
  double beta2 = 0.999;
  loss::LossWeights weights;
  loss::DamsmConfig damsm;
  bool damsm_on_regions = true;  // false: whole image against all captions
  bool damsm_scene_pairs = true;
  bool ema = false;
  std::uint64_t seed = 0;

  // run length (excluded from the config hash)
  std::int64_t epochs = 60;
  std::int64_t damsm_epochs = 30;
  std::int64_t oracle_epochs = 4;
  std::int64_t max_steps = 0;  // 0: no limit
  std::int64_t checkpoint_every = 1000;
  std::int64_t log_every = 50;

  void validate() const;

  /// Canonical text form; parse_config(to_text()) reproduces the config.
  std::string to_text() const;
  /// FNV-1a 64 over the canonical text of the hashed keys.
  std::uint64_t hash() const;
};

TrainConfig parse_config(const std::string& text, TrainConfig base = {});
TrainConfig load_config(const std::filesystem::path& path);

/// Named presets: "desk" (default), "paper" (128 px, batch 128, 200 epochs),
/// "tiny" (32 px, narrow networks; for tests).
TrainConfig preset_config(const std::string& name);

std::string hex64(std::uint64_t v);

}  // namespace dtc
