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
#include <vector>

namespace dtc::gen {

/// Per-region conditioning for a batch of layouts, padded to a common M.
struct LayoutBatch {
  torch::Tensor boxes;       // [N, M, 4] normalized (x1, y1, x2, y2)
  torch::Tensor valid;       // [N, M] bool
  torch::Tensor embeddings;  // [N, M, d_e] caption embeddings
};

/// Rows are (z_i || e_i).
struct EmbeddingMatrix {
  torch::Tensor s;  // [..., m, d_z + d_e]
  torch::Tensor z;  // [..., m, d_z]
  torch::Tensor e;  // [..., m, d_e]
};

/// Stacks per-region caption embeddings with region latents. `z` is used as
/// given when supplied, otherwise drawn standard normal from `seed`.
EmbeddingMatrix build_embedding_matrix(std::span<const torch::Tensor> embeddings, std::int64_t d_z,
                                       std::optional<torch::Tensor> z = std::nullopt, std::uint64_t seed = 0);

/// Batched form: concatenates e [N, M, d_e] and z [N, M, d_z] on the last axis.
EmbeddingMatrix embedding_matrix(const torch::Tensor& e, const torch::Tensor& z);

/// Standard normal tensor drawn from a generator seeded with `seed`.
torch::Tensor seeded_normal(at::IntArrayRef sizes, std::uint64_t seed);

/// 1 for grid cells overlapping the box, 0 elsewhere. boxes [..., 4] -> [..., h, w].
torch::Tensor box_footprint(const torch::Tensor& boxes, std::int64_t h, std::int64_t w);

/// Bilinearly stretches each k x k patch over its box on an h x w grid and
/// zeroes everything outside the box footprint. patches [..., k, k], boxes [..., 4].
torch::Tensor place_masks(const torch::Tensor& patches, const torch::Tensor& boxes, std::int64_t h,
                          std::int64_t w);

/// Blended per-pixel modulation maps (gamma_hat, beta_hat), each [N, C, h, w].
/// gamma/beta [N, M, C]; masks [N, M, h, w] already zero outside boxes.
std::pair<torch::Tensor, torch::Tensor> modulation_maps(const torch::Tensor& gamma, const torch::Tensor& beta,
                                                        const torch::Tensor& masks, const torch::Tensor& bg_gamma,
                                                        const torch::Tensor& bg_beta, double eps = 1e-6);

/// Layout-aware, text-sensitive modulation of already normalized features.
torch::Tensor lats_modulate(const torch::Tensor& normalized, const torch::Tensor& gamma, const torch::Tensor& beta,
                            const torch::Tensor& masks, const torch::Tensor& bg_gamma, const torch::Tensor& bg_beta,
                            double eps = 1e-6);

/// Maps embedding-matrix rows to k x k mask patches in (0, 1).
class MaskRegressorImpl : public torch::nn::Module {
 public:
  MaskRegressorImpl(std::int64_t in_dim, std::int64_t hidden, std::int64_t mask_size);
  torch::Tensor forward(const torch::Tensor& s);  // [..., D] -> [..., k, k]
  std::int64_t mask_size() const { return mask_size_; }

 private:
  std::int64_t mask_size_;
  torch::nn::Linear fc1_{nullptr};
  torch::nn::Linear fc2_{nullptr};
};
TORCH_MODULE(MaskRegressor);

/// Mask patches placed on one grid, [N, M, h, w]; padded regions are zero.
/// Throws if a valid region covers no grid cell.
torch::Tensor predict_masks(MaskRegressor& regressor, const torch::Tensor& s, const torch::Tensor& boxes,
                            const torch::Tensor& valid, std::int64_t h, std::int64_t w);

/// BatchNorm without affine terms followed by LATS modulation.
class LatsNormImpl : public torch::nn::Module {
 public:
  LatsNormImpl(std::int64_t channels, std::int64_t cond_dim);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& s, const torch::Tensor& masks);

  torch::nn::BatchNorm2d norm{nullptr};
  torch::nn::Linear gamma_proj{nullptr};
  torch::nn::Linear beta_proj{nullptr};
  torch::Tensor bg_gamma;
  torch::Tensor bg_beta;
};
TORCH_MODULE(LatsNorm);

class ResBlockUpImpl : public torch::nn::Module {
 public:
  ResBlockUpImpl(std::int64_t in, std::int64_t out, std::int64_t cond_dim);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& s, const torch::Tensor& masks_in,
                        const torch::Tensor& masks_out);

 private:
  LatsNorm norm1_{nullptr};
  LatsNorm norm2_{nullptr};
  torch::nn::Conv2d conv1_{nullptr};
  torch::nn::Conv2d conv2_{nullptr};
  torch::nn::Conv2d shortcut_{nullptr};
};
TORCH_MODULE(ResBlockUp);

struct GeneratorOptions {
  std::int64_t image_size = 64;
  std::int64_t base_channels = 256;
  std::int64_t min_channels = 32;
  std::int64_t z_img_dim = 128;
  std::int64_t z_region_dim = 128;
  std::int64_t embed_dim = 128;
  std::int64_t mask_size = 16;
  std::int64_t mask_hidden = 256;
  std::int64_t max_regions = 6;

  std::int64_t num_blocks() const;
  std::int64_t channels_after(std::int64_t block) const;
};

class GeneratorImpl : public torch::nn::Module {
 public:
  explicit GeneratorImpl(const GeneratorOptions& options);

  /// z_img [N, d_img]; s [N, M, d_z + d_e]; boxes [N, M, 4]; valid [N, M].
  torch::Tensor forward(const torch::Tensor& z_img, const torch::Tensor& s, const torch::Tensor& boxes,
                        const torch::Tensor& valid);

  const GeneratorOptions& options() const { return options_; }
  MaskRegressor& mask_regressor() { return masks_; }

 private:
  GeneratorOptions options_;
  torch::nn::Linear fc_{nullptr};
  MaskRegressor masks_{nullptr};
  std::vector<ResBlockUp> blocks_;
  torch::nn::BatchNorm2d out_norm_{nullptr};
  torch::nn::Conv2d to_rgb_{nullptr};
};
TORCH_MODULE(Generator);

/// Latents plus layout conditioning for one generate call.
struct GenerateInput {
  torch::Tensor z_img;   // [N, d_img]
  torch::Tensor z_regions;  // [N, M, d_z]
  LayoutBatch layout;
};

/// Validates region counts and runs the generator; output [N, 3, H, W] in [-1, 1].
torch::Tensor generate(Generator& generator, const GenerateInput& input);

}  // namespace dtc::gen
