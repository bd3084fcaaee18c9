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

#include "dtc/checkpoint.hpp"
#include "dtc/config.hpp"
#include "dtc/damsm.hpp"
#include "dtc/discriminator.hpp"
#include "dtc/evaluator.hpp"
#include "dtc/generator.hpp"
#include "dtc/text.hpp"

namespace dtc {

gen::GeneratorOptions generator_options(const TrainConfig& cfg);
disc::DiscriminatorOptions discriminator_options(const TrainConfig& cfg);
damsm::ImageEncoderOptions image_encoder_options(const TrainConfig& cfg);
eval::OracleOptions oracle_options(const TrainConfig& cfg);

/// Every network of a run plus the vocabulary and config they were built for.
struct Models {
  TrainConfig config;
  text::Vocabulary vocab;
  text::TextEncoder text{nullptr};
  damsm::ImageEncoder image_encoder{nullptr};
  gen::Generator generator{nullptr};
  disc::Discriminator discriminator{nullptr};
  eval::Oracle oracle{nullptr};
  gen::Generator generator_ema{nullptr};  // only when config.ema

  /// Fresh networks; initial weights depend only on config.seed.
  static Models create(const TrainConfig& config, text::Vocabulary vocab);
  /// Rebuilds from the stored config and loads every module present in the file.
  static Models from_checkpoint(const ckpt::Checkpoint& ckpt);

  ckpt::Checkpoint to_checkpoint(std::int64_t step, std::int64_t epoch) const;
  /// Loads the modules whose prefix exists in `ckpt`; returns their prefixes.
  std::vector<std::string> load_available(const ckpt::Checkpoint& ckpt);

  /// Generator used for inference: the EMA copy when present.
  gen::Generator& inference_generator() { return generator_ema ? generator_ema : generator; }
};

/// FNV-1a 64 over the raw bytes of all parameters and buffers.
std::uint64_t parameter_hash(const torch::nn::Module& module);

void set_trainable(torch::nn::Module& module, bool trainable);

/// Encodes flattened token ids [R, T] with lengths [R].
text::TextEncoding encode_tokens(text::TextEncoder& encoder, const torch::Tensor& ids, const torch::Tensor& lengths);

/// Scatters per-region rows [R, D] back to a padded [N, M, D] tensor.
torch::Tensor scatter_regions(const torch::Tensor& flat, const torch::Tensor& valid);

/// Generator input latents for one sample derived from a seed.
struct SampleLatents {
  torch::Tensor z_img;      // [d_img]
  torch::Tensor z_regions;  // [m, d_z]
};
SampleLatents latents_from_seeds(const gen::GeneratorOptions& opts, std::uint64_t global_seed,
                                 std::span<const std::uint64_t> region_seeds);

}  // namespace dtc
