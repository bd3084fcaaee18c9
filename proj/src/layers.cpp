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

#include "dtc/layers.hpp"

#include <cmath>

namespace dtc::nn {

namespace {
constexpr double kSnEps = 1e-12;

torch::Tensor l2_normalize(const torch::Tensor& x) { return x / x.norm().clamp_min(kSnEps); }
}  // namespace

void SpectralNorm::init(torch::nn::Module& owner, const torch::Tensor& weight) {
  const auto w = weight.reshape({weight.size(0), -1});
  u_ = owner.register_buffer("sn_u", l2_normalize(torch::randn({w.size(0)}, w.options())));
  v_ = owner.register_buffer("sn_v", l2_normalize(torch::randn({w.size(1)}, w.options())));
  torch::NoGradGuard no_grad;
  for (int i = 0; i < 15; ++i) {
    v_.copy_(l2_normalize(torch::mv(w.t(), u_)));
    u_.copy_(l2_normalize(torch::mv(w, v_)));
  }
}

torch::Tensor SpectralNorm::normalize(const torch::Tensor& weight, bool training) {
  const auto w = weight.reshape({weight.size(0), -1});
  if (training) {
    torch::NoGradGuard no_grad;
    const auto wd = w.detach();
    v_.copy_(l2_normalize(torch::mv(wd.t(), u_)));
    u_.copy_(l2_normalize(torch::mv(wd, v_)));
  }
  // Clones keep later in-place power iterations from invalidating this graph.
  const auto sigma = torch::dot(u_.clone(), torch::mv(w, v_.clone()));
  return weight / sigma;
}

SNLinearImpl::SNLinearImpl(std::int64_t in, std::int64_t out, bool with_bias) {
  weight = register_parameter("weight", torch::empty({out, in}));
  torch::nn::init::xavier_uniform_(weight);
  if (with_bias) bias = register_parameter("bias", torch::zeros({out}));
  sn_.init(*this, weight);
}

torch::Tensor SNLinearImpl::normalized_weight() { return sn_.normalize(weight, is_training()); }

torch::Tensor SNLinearImpl::forward(const torch::Tensor& x) {
  return torch::nn::functional::linear(x, normalized_weight(), bias.defined() ? bias : torch::Tensor());
}

SNConv2dImpl::SNConv2dImpl(std::int64_t in, std::int64_t out, std::int64_t kernel, std::int64_t padding)
    : padding_(padding) {
  weight = register_parameter("weight", torch::empty({out, in, kernel, kernel}));
  torch::nn::init::xavier_uniform_(weight);
  bias = register_parameter("bias", torch::zeros({out}));
  sn_.init(*this, weight);
}

torch::Tensor SNConv2dImpl::forward(const torch::Tensor& x) {
  return torch::conv2d(x, sn_.normalize(weight, is_training()), bias, 1, padding_);
}

}  // namespace dtc::nn
