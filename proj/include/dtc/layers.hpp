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

namespace dtc::nn {

/// Divides a weight matrix by its largest singular value, estimated with one
/// power iteration per training-mode forward. The iteration vectors are
/// buffers so eval-mode forwards are pure.
class SpectralNorm {
 public:
  SpectralNorm() = default;
  void init(torch::nn::Module& owner, const torch::Tensor& weight);
  torch::Tensor normalize(const torch::Tensor& weight, bool training);

 private:
  torch::Tensor u_;
  torch::Tensor v_;
};

class SNLinearImpl : public torch::nn::Module {
 public:
  SNLinearImpl(std::int64_t in, std::int64_t out, bool bias = true);
  torch::Tensor forward(const torch::Tensor& x);
  torch::Tensor normalized_weight();

  torch::Tensor weight;
  torch::Tensor bias;

 private:
  SpectralNorm sn_;
};
TORCH_MODULE(SNLinear);

class SNConv2dImpl : public torch::nn::Module {
 public:
  SNConv2dImpl(std::int64_t in, std::int64_t out, std::int64_t kernel, std::int64_t padding);
  torch::Tensor forward(const torch::Tensor& x);

  torch::Tensor weight;
  torch::Tensor bias;

 private:
  std::int64_t padding_;
  SpectralNorm sn_;
};
TORCH_MODULE(SNConv2d);

}  // namespace dtc::nn
