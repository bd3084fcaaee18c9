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

#include "dtc/damsm.hpp"

namespace dtc::damsm {

torch::Tensor crop_regions(const torch::Tensor& images, const disc::RegionList& regions, std::int64_t size) {
  return disc::roi_align(images, regions, size).pooled;
}

ImageEncoderImpl::ImageEncoderImpl(const ImageEncoderOptions& options) : options_(options) {
  TORCH_CHECK(options.crop_size % 4 == 0, "ImageEncoder: crop_size must be a multiple of 4");
  const auto c = options.channels;
  using torch::nn::Conv2dOptions;
  conv1_ = register_module("conv1", torch::nn::Conv2d(Conv2dOptions(3, c, 3).padding(1)));
  conv2_ = register_module("conv2", torch::nn::Conv2d(Conv2dOptions(c, 2 * c, 4).stride(2).padding(1)));
  conv3_ = register_module("conv3", torch::nn::Conv2d(Conv2dOptions(2 * c, 4 * c, 4).stride(2).padding(1)));
  local_ = register_module("local", torch::nn::Conv2d(Conv2dOptions(4 * c, options.word_dim, 1)));
  global_ = register_module("global", torch::nn::Linear(4 * c, options.embed_dim));
}

loss::DamsmImageFeatures ImageEncoderImpl::forward(const torch::Tensor& crops) {
  TORCH_CHECK(crops.dim() == 4 && crops.size(2) == options_.crop_size && crops.size(3) == options_.crop_size,
              "ImageEncoder: crops must be [B, 3, ", options_.crop_size, ", ", options_.crop_size, "]");
  auto h = torch::leaky_relu(conv1_(crops), 0.2);
  h = torch::leaky_relu(conv2_(h), 0.2);
  h = torch::leaky_relu(conv3_(h), 0.2);
  auto local = local_(h).flatten(2).transpose(1, 2);  // [B, L, D]
  auto global = global_(h.mean({2, 3}));
  return {local, global};
}

torch::Tensor match_scores(const loss::DamsmImageFeatures& image, const loss::DamsmTextFeatures& text,
                           const loss::DamsmConfig& cfg) {
  return loss::damsm_word_scores(image.local, text.words, text.mask, cfg) +
         loss::damsm_sentence_scores(image.global, text.sentence);
}

}  // namespace dtc::damsm
