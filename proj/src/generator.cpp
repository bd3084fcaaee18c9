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

#include "dtc/generator.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <stdexcept>
#include <string>

namespace dtc::gen {

namespace F = torch::nn::functional;

torch::Tensor seeded_normal(at::IntArrayRef sizes, std::uint64_t seed) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  return at::randn(sizes, gen, torch::TensorOptions().dtype(torch::kFloat32));
}

EmbeddingMatrix build_embedding_matrix(std::span<const torch::Tensor> embeddings, std::int64_t d_z,
                                       std::optional<torch::Tensor> z, std::uint64_t seed) {
  if (embeddings.empty()) throw std::invalid_argument("build_embedding_matrix: at least one region required");
  const auto d_e = embeddings.front().numel();
  std::vector<torch::Tensor> rows;
  rows.reserve(embeddings.size());
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    if (embeddings[i].dim() != 1 || embeddings[i].numel() != d_e) {
      throw std::invalid_argument("build_embedding_matrix: embedding " + std::to_string(i) + " has dimension " +
                                  std::to_string(embeddings[i].numel()) + ", expected " + std::to_string(d_e));
    }
    rows.push_back(embeddings[i]);
  }
  auto e = torch::stack(rows);
  const auto m = e.size(0);
  torch::Tensor zr;
  if (z) {
    zr = *z;
    if (zr.dim() != 2 || zr.size(0) != m || zr.size(1) != d_z) {
      throw std::invalid_argument("build_embedding_matrix: supplied latents must be [m, d_z]");
    }
    zr = zr.to(e.dtype());
  } else {
    zr = seeded_normal({m, d_z}, seed).to(e.dtype());
  }
  return embedding_matrix(e, zr);
}

EmbeddingMatrix embedding_matrix(const torch::Tensor& e, const torch::Tensor& z) {
  TORCH_CHECK(e.dim() == z.dim() && e.sizes().slice(0, e.dim() - 1) == z.sizes().slice(0, z.dim() - 1),
              "embedding_matrix: e and z disagree on leading dimensions");
  return {torch::cat({z, e}, -1), z, e};
}

torch::Tensor box_footprint(const torch::Tensor& boxes, std::int64_t h, std::int64_t w) {
  TORCH_CHECK(boxes.size(-1) == 4, "box_footprint: boxes must end in 4 coordinates");
  const auto opts = boxes.options();
  const auto cols = torch::arange(w, opts);
  const auto rows = torch::arange(h, opts);
  const auto x1 = boxes.select(-1, 0).unsqueeze(-1) * w;
  const auto y1 = boxes.select(-1, 1).unsqueeze(-1) * h;
  const auto x2 = boxes.select(-1, 2).unsqueeze(-1) * w;
  const auto y2 = boxes.select(-1, 3).unsqueeze(-1) * h;
  const auto in_x = (cols < x2) & (cols + 1 > x1);  // [..., w]
  const auto in_y = (rows < y2) & (rows + 1 > y1);  // [..., h]
  return (in_y.unsqueeze(-1) & in_x.unsqueeze(-2)).to(opts.dtype());
}

torch::Tensor place_masks(const torch::Tensor& patches, const torch::Tensor& boxes, std::int64_t h,
                          std::int64_t w) {
  TORCH_CHECK(patches.dim() >= 2 && patches.size(-1) == patches.size(-2), "place_masks: patches must be k x k");
  TORCH_CHECK(boxes.dim() == patches.dim() - 1, "place_masks: boxes and patches disagree on rank");
  const auto k = patches.size(-1);
  auto lead = patches.sizes().slice(0, patches.dim() - 2).vec();
  const auto flat_patches = patches.reshape({-1, 1, k, k});
  const auto flat_boxes = boxes.reshape({-1, 4}).to(patches.dtype());
  const auto r = flat_boxes.size(0);
  const auto opts = flat_boxes.options();

  const auto x1 = flat_boxes.select(1, 0).unsqueeze(1);
  const auto y1 = flat_boxes.select(1, 1).unsqueeze(1);
  const auto bw = (flat_boxes.select(1, 2).unsqueeze(1) - x1).clamp_min(1e-12);
  const auto bh = (flat_boxes.select(1, 3).unsqueeze(1) - y1).clamp_min(1e-12);
  const auto px = (torch::arange(w, opts) + 0.5) / static_cast<double>(w);
  const auto py = (torch::arange(h, opts) + 0.5) / static_cast<double>(h);
  const auto gx = ((px - x1) / bw) * 2.0 - 1.0;  // [R, w]
  const auto gy = ((py - y1) / bh) * 2.0 - 1.0;  // [R, h]
  const auto grid = torch::stack({gx.unsqueeze(1).expand({r, h, w}), gy.unsqueeze(2).expand({r, h, w})}, -1);
  auto sampled = F::grid_sample(flat_patches, grid,
                                F::GridSampleFuncOptions()
                                    .mode(torch::kBilinear)
                                    .padding_mode(torch::kBorder)
                                    .align_corners(false))
                     .squeeze(1);
  sampled = sampled * box_footprint(flat_boxes, h, w);
  lead.push_back(h);
  lead.push_back(w);
  return sampled.reshape(lead);
}

std::pair<torch::Tensor, torch::Tensor> modulation_maps(const torch::Tensor& gamma, const torch::Tensor& beta,
                                                        const torch::Tensor& masks, const torch::Tensor& bg_gamma,
                                                        const torch::Tensor& bg_beta, double eps) {
  TORCH_CHECK(masks.dim() == 4 && gamma.dim() == 3 && beta.sizes() == gamma.sizes(),
              "modulation_maps: expected gamma/beta [N, M, C] and masks [N, M, h, w]");
  TORCH_CHECK(masks.size(0) == gamma.size(0) && masks.size(1) == gamma.size(1),
              "modulation_maps: masks and modulation parameters disagree on N or M");
  const bool has_bg = bg_gamma.defined() && bg_beta.defined();
  if (masks.size(1) == 0 && !has_bg) {
    throw std::invalid_argument("lats_modulate: no regions and no background parameters");
  }
  const auto weight_sum = masks.sum(1);  // [N, h, w]
  auto g = torch::einsum("nmhw,nmc->nchw", {masks, gamma});
  auto b = torch::einsum("nmhw,nmc->nchw", {masks, beta});
  auto total = weight_sum;
  if (has_bg) {
    const auto bg_weight = (1.0 - weight_sum).clamp_min(0.0).unsqueeze(1);
    g = g + bg_weight * bg_gamma.view({1, -1, 1, 1});
    b = b + bg_weight * bg_beta.view({1, -1, 1, 1});
    total = total + bg_weight.squeeze(1);
  }
  const auto denom = total.clamp_min(eps).unsqueeze(1);
  return {g / denom, b / denom};
}

torch::Tensor lats_modulate(const torch::Tensor& normalized, const torch::Tensor& gamma, const torch::Tensor& beta,
                            const torch::Tensor& masks, const torch::Tensor& bg_gamma, const torch::Tensor& bg_beta,
                            double eps) {
  TORCH_CHECK(normalized.dim() == 4, "lats_modulate: features must be [N, C, h, w]");
  TORCH_CHECK(masks.size(2) == normalized.size(2) && masks.size(3) == normalized.size(3),
              "lats_modulate: masks must share the feature grid");
  TORCH_CHECK(gamma.size(2) == normalized.size(1), "lats_modulate: gamma channel count differs from features");
  auto [g, b] = modulation_maps(gamma, beta, masks, bg_gamma, bg_beta, eps);
  return g * normalized + b;
}

MaskRegressorImpl::MaskRegressorImpl(std::int64_t in_dim, std::int64_t hidden, std::int64_t mask_size)
    : mask_size_(mask_size) {
  fc1_ = register_module("fc1", torch::nn::Linear(in_dim, hidden));
  fc2_ = register_module("fc2", torch::nn::Linear(hidden, mask_size * mask_size));
}

torch::Tensor MaskRegressorImpl::forward(const torch::Tensor& s) {
  auto lead = s.sizes().slice(0, s.dim() - 1).vec();
  lead.push_back(mask_size_);
  lead.push_back(mask_size_);
  return torch::sigmoid(fc2_(torch::relu(fc1_(s)))).reshape(lead);
}

namespace {

torch::Tensor placed_masks(const torch::Tensor& patches, const torch::Tensor& boxes, const torch::Tensor& valid,
                           std::int64_t h, std::int64_t w) {
  const auto validf = valid.to(patches.dtype());
  const auto footprint = box_footprint(boxes.to(patches.dtype()), h, w).sum({-1, -2});  // [N, M]
  const auto empty = (footprint == 0) & valid;
  if (empty.any().item<bool>()) {
    const auto idx = empty.nonzero()[0];
    throw std::invalid_argument("predict_masks: region " + std::to_string(idx[1].item<std::int64_t>()) +
                                " of layout " + std::to_string(idx[0].item<std::int64_t>()) +
                                " has zero pixel footprint at " + std::to_string(h) + "x" + std::to_string(w));
  }
  return place_masks(patches, boxes, h, w) * validf.unsqueeze(-1).unsqueeze(-1);
}

}  // namespace

torch::Tensor predict_masks(MaskRegressor& regressor, const torch::Tensor& s, const torch::Tensor& boxes,
                            const torch::Tensor& valid, std::int64_t h, std::int64_t w) {
  return placed_masks(regressor->forward(s), boxes, valid, h, w);
}

LatsNormImpl::LatsNormImpl(std::int64_t channels, std::int64_t cond_dim) {
  norm = register_module(
      "norm", torch::nn::BatchNorm2d(torch::nn::BatchNorm2dOptions(channels).affine(false).momentum(0.1)));
  gamma_proj = register_module("gamma_proj", torch::nn::Linear(cond_dim, channels));
  beta_proj = register_module("beta_proj", torch::nn::Linear(cond_dim, channels));
  {
    torch::NoGradGuard no_grad;
    gamma_proj->weight.normal_(0.0, 0.02);
    gamma_proj->bias.fill_(1.0);
    beta_proj->weight.normal_(0.0, 0.02);
    beta_proj->bias.zero_();
  }
  bg_gamma = register_parameter("bg_gamma", torch::ones({channels}));
  bg_beta = register_parameter("bg_beta", torch::zeros({channels}));
}

torch::Tensor LatsNormImpl::forward(const torch::Tensor& x, const torch::Tensor& s, const torch::Tensor& masks) {
  return lats_modulate(norm(x), gamma_proj(s), beta_proj(s), masks, bg_gamma, bg_beta);
}

ResBlockUpImpl::ResBlockUpImpl(std::int64_t in, std::int64_t out, std::int64_t cond_dim) {
  norm1_ = register_module("norm1", LatsNorm(in, cond_dim));
  conv1_ = register_module("conv1", torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).padding(1)));
  norm2_ = register_module("norm2", LatsNorm(out, cond_dim));
  conv2_ = register_module("conv2", torch::nn::Conv2d(torch::nn::Conv2dOptions(out, out, 3).padding(1)));
  shortcut_ = register_module("shortcut", torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 1)));
}

torch::Tensor ResBlockUpImpl::forward(const torch::Tensor& x, const torch::Tensor& s, const torch::Tensor& masks_in,
                                      const torch::Tensor& masks_out) {
  const auto up = F::InterpolateFuncOptions().scale_factor(std::vector<double>{2.0, 2.0}).mode(torch::kNearest);
  auto h = torch::relu(norm1_(x, s, masks_in));
  h = conv1_(F::interpolate(h, up));
  h = conv2_(torch::relu(norm2_(h, s, masks_out)));
  return h + shortcut_(F::interpolate(x, up));
}

std::int64_t GeneratorOptions::num_blocks() const {
  std::int64_t blocks = 0;
  for (std::int64_t r = 4; r < image_size; r *= 2) ++blocks;
  if ((std::int64_t{4} << blocks) != image_size || blocks < 1) {
    throw std::invalid_argument("GeneratorOptions: image_size must be 4 * 2^k with k >= 1");
  }
  return blocks;
}

std::int64_t GeneratorOptions::channels_after(std::int64_t block) const {
  return std::max(base_channels >> (block + 1), min_channels);
}

GeneratorImpl::GeneratorImpl(const GeneratorOptions& options) : options_(options) {
  const auto cond_dim = options.z_region_dim + options.embed_dim;
  const auto blocks = options.num_blocks();
  fc_ = register_module("fc", torch::nn::Linear(options.z_img_dim, 16 * options.base_channels));
  masks_ = register_module("masks", MaskRegressor(cond_dim, options.mask_hidden, options.mask_size));
  std::int64_t in = options.base_channels;
  for (std::int64_t b = 0; b < blocks; ++b) {
    const auto out = options.channels_after(b);
    blocks_.push_back(register_module("block" + std::to_string(b), ResBlockUp(in, out, cond_dim)));
    in = out;
  }
  out_norm_ = register_module("out_norm", torch::nn::BatchNorm2d(torch::nn::BatchNorm2dOptions(in).momentum(0.1)));
  to_rgb_ = register_module("to_rgb", torch::nn::Conv2d(torch::nn::Conv2dOptions(in, 3, 3).padding(1)));
}

torch::Tensor GeneratorImpl::forward(const torch::Tensor& z_img, const torch::Tensor& s, const torch::Tensor& boxes,
                                     const torch::Tensor& valid) {
  TORCH_CHECK(z_img.dim() == 2 && z_img.size(1) == options_.z_img_dim, "Generator: z_img must be [N, ",
              options_.z_img_dim, "]");
  TORCH_CHECK(s.dim() == 3 && s.size(0) == z_img.size(0), "Generator: S must be [N, M, D]");
  TORCH_CHECK(boxes.dim() == 3 && boxes.size(1) == s.size(1) && valid.sizes() == boxes.sizes().slice(0, 2),
              "Generator: boxes/valid must match S");
  const auto n = z_img.size(0);
  const auto patches = masks_(s);
  auto x = fc_(z_img).view({n, options_.base_channels, 4, 4});
  std::int64_t res = 4;
  auto masks_in = placed_masks(patches, boxes, valid, res, res);
  for (auto& block : blocks_) {
    auto masks_out = placed_masks(patches, boxes, valid, res * 2, res * 2);
    x = block->forward(x, s, masks_in, masks_out);
    masks_in = masks_out;
    res *= 2;
  }
  return torch::tanh(to_rgb_(torch::relu(out_norm_(x))));
}

torch::Tensor generate(Generator& generator, const GenerateInput& input) {
  const auto& opts = generator->options();
  const auto& layout = input.layout;
  TORCH_CHECK(layout.valid.dim() == 2, "generate: valid must be [N, M]");
  const auto counts = layout.valid.sum(1);
  if (layout.valid.size(1) == 0 || counts.min().item<std::int64_t>() == 0) {
    throw std::invalid_argument("generate: every layout needs at least one region");
  }
  if (counts.max().item<std::int64_t>() > opts.max_regions) {
    throw std::invalid_argument("generate: layout has more than max_regions=" + std::to_string(opts.max_regions) +
                                " regions");
  }
  const auto em = embedding_matrix(layout.embeddings, input.z_regions);
  return generator->forward(input.z_img, em.s, layout.boxes, layout.valid);
}

}  // namespace dtc::gen
