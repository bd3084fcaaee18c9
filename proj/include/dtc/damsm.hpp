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

#include "dtc/discriminator.hpp"
#include "dtc/losses.hpp"

namespace dtc::damsm {

/// Bilinear crops of each region, resampled to size x size. [R, 3, size, size]
torch::Tensor crop_regions(const torch::Tensor& images, const disc::RegionList& regions, std::int64_t size);

struct ImageEncoderOptions {
  std::int64_t crop_size = 32;
  std::int64_t word_dim = 128;
  std::int64_t embed_dim = 128;
  std::int64_t channels = 32;
};

/// Small conv encoder producing an 8x8 grid of location features (in word
/// space) and a global vector (in sentence space) for each crop.
class ImageEncoderImpl : public torch::nn::Module {
 public:
  explicit ImageEncoderImpl(const ImageEncoderOptions& options);
  loss::DamsmImageFeatures forward(const torch::Tensor& crops);
  const ImageEncoderOptions& options() const { return options_; }

 private:
  ImageEncoderOptions options_;
  torch::nn::Conv2d conv1_{nullptr};
  torch::nn::Conv2d conv2_{nullptr};
  torch::nn::Conv2d conv3_{nullptr};
  torch::nn::Conv2d local_{nullptr};
  torch::nn::Linear global_{nullptr};
};
TORCH_MODULE(ImageEncoder);

/// Combined word + sentence matching score for every (image, text) pair.
torch::Tensor match_scores(const loss::DamsmImageFeatures& image, const loss::DamsmTextFeatures& text,
                           const loss::DamsmConfig& cfg);

}  // namespace dtc::damsm
