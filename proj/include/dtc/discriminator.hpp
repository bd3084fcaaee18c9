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

#include <vector>

#include "dtc/layers.hpp"

namespace dtc::disc {

/// Regions flattened across a batch.
struct RegionList {
  torch::Tensor boxes;        // [R, 4] normalized
  torch::Tensor batch_index;  // [R] int64 image index
};

/// Keeps the valid entries of padded [N, M, ...] region tensors, in row-major order.
RegionList flatten_regions(const torch::Tensor& boxes, const torch::Tensor& valid);
torch::Tensor flatten_valid(const torch::Tensor& per_region, const torch::Tensor& valid);

struct RoiAlignResult {
  torch::Tensor pooled;       // [R, C, P, P]
  std::vector<bool> clamped;  // box smaller than one feature cell on some axis
};

/// Samples each box on a P x P grid of bin centres by bilinear interpolation,
/// with no coordinate rounding. Boxes narrower than one feature cell are
/// widened to one cell and flagged.
RoiAlignResult roi_align(const torch::Tensor& features, const RegionList& regions, std::int64_t bins);

class ResBlockDownImpl : public torch::nn::Module {
 public:
  ResBlockDownImpl(std::int64_t in, std::int64_t out, bool downsample, bool preactivate);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  bool downsample_;
  bool preactivate_;
  nn::SNConv2d conv1_{nullptr};
  nn::SNConv2d conv2_{nullptr};
  nn::SNConv2d shortcut_{nullptr};
};
TORCH_MODULE(ResBlockDown);

struct DiscriminatorOptions {
  std::int64_t image_size = 64;
  std::int64_t base_channels = 32;  // backbone widths: base, 2*base, 4*base, 8*base
  std::int64_t region_dim = 256;
  std::int64_t embed_dim = 128;
  std::int64_t roi_bins = 4;

  std::int64_t backbone_channels() const { return base_channels * 8; }
};

struct RegionFeatures {
  torch::Tensor features;  // [R, C_r]
  std::vector<bool> clamped;
};

struct DiscriminatorOutput {
  torch::Tensor image_score;    // [N]
  torch::Tensor region_scores;  // [R]
  torch::Tensor region_features;  // [R, C_r]
  torch::Tensor multimodal;     // [R, C_r]
  std::vector<bool> clamped;
};

class DiscriminatorImpl : public torch::nn::Module {
 public:
  explicit DiscriminatorImpl(const DiscriminatorOptions& options);

  torch::Tensor backbone(const torch::Tensor& images);
  torch::Tensor image_score(const torch::Tensor& feature_map);
  RegionFeatures extract_region_features(const torch::Tensor& feature_map, const RegionList& regions);
  /// psi(phi) + <P_e(e), phi>
  torch::Tensor region_score(const torch::Tensor& phi, const torch::Tensor& embeddings);
  /// phi * P_e(e), elementwise
  torch::Tensor multimodal_feature(const torch::Tensor& phi, const torch::Tensor& embeddings);
  torch::Tensor project_embedding(const torch::Tensor& embeddings);

  /// One backbone pass shared by the image and region heads.
  DiscriminatorOutput forward(const torch::Tensor& images, const RegionList& regions,
                              const torch::Tensor& embeddings);

  const DiscriminatorOptions& options() const { return options_; }

 private:
  DiscriminatorOptions options_;
  std::vector<ResBlockDown> backbone_;
  ResBlockDown image_block_{nullptr};
  nn::SNLinear image_out_{nullptr};
  nn::SNLinear region_proj_{nullptr};
  nn::SNLinear psi_{nullptr};
  nn::SNLinear embed_proj_{nullptr};
};
TORCH_MODULE(Discriminator);

}  // namespace dtc::disc
