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

#include "dtc/discriminator.hpp"

#include <stdexcept>

namespace dtc::disc {

namespace F = torch::nn::functional;

RegionList flatten_regions(const torch::Tensor& boxes, const torch::Tensor& valid) {
  TORCH_CHECK(boxes.dim() == 3 && boxes.size(2) == 4, "flatten_regions: boxes must be [N, M, 4]");
  TORCH_CHECK(valid.sizes() == boxes.sizes().slice(0, 2), "flatten_regions: valid must be [N, M]");
  const auto idx = valid.nonzero();  // [R, 2], row-major
  const auto n_idx = idx.select(1, 0);
  const auto m_idx = idx.select(1, 1);
  return {boxes.index({n_idx, m_idx}), n_idx.contiguous()};
}

torch::Tensor flatten_valid(const torch::Tensor& per_region, const torch::Tensor& valid) {
  const auto idx = valid.nonzero();
  return per_region.index({idx.select(1, 0), idx.select(1, 1)});
}

RoiAlignResult roi_align(const torch::Tensor& features, const RegionList& regions, std::int64_t bins) {
  TORCH_CHECK(features.dim() == 4, "roi_align: features must be [N, C, H, W]");
  TORCH_CHECK(bins >= 1, "roi_align: bins must be positive");
  const auto& boxes = regions.boxes;
  TORCH_CHECK(boxes.dim() == 2 && boxes.size(1) == 4, "roi_align: boxes must be [R, 4]");
  TORCH_CHECK(regions.batch_index.numel() == boxes.size(0), "roi_align: one batch index per box");
  const auto r = boxes.size(0);
  const auto c = features.size(1);
  const auto h = features.size(2);
  const auto w = features.size(3);

  // Geometry in double on the host; the sampling pattern carries no gradient.
  auto geom = boxes.detach().to(torch::kFloat64).contiguous();
  auto g = geom.accessor<double, 2>();
  std::vector<bool> clamped(static_cast<std::size_t>(r), false);
  auto widen = [](double lo, double hi, double extent, bool& flag) {
    // Coordinates in feature cells.
    if (hi - lo >= 1.0) return std::pair{lo, hi};
    flag = true;
    double centre = 0.5 * (lo + hi);
    centre = std::clamp(centre, 0.5, extent - 0.5);
    return std::pair{centre - 0.5, centre + 0.5};
  };
  auto xs = torch::empty({r, bins}, torch::kFloat64);
  auto ys = torch::empty({r, bins}, torch::kFloat64);
  auto xa = xs.accessor<double, 2>();
  auto ya = ys.accessor<double, 2>();
  for (std::int64_t i = 0; i < r; ++i) {
    bool flag = false;
    auto [x1, x2] = widen(g[i][0] * w, g[i][2] * w, static_cast<double>(w), flag);
    auto [y1, y2] = widen(g[i][1] * h, g[i][3] * h, static_cast<double>(h), flag);
    clamped[static_cast<std::size_t>(i)] = flag;
    for (std::int64_t b = 0; b < bins; ++b) {
      // Continuous edge coordinates -> cell-centre index space.
      xa[i][b] = x1 + (b + 0.5) * (x2 - x1) / bins - 0.5;
      ya[i][b] = y1 + (b + 0.5) * (y2 - y1) / bins - 0.5;
    }
  }
  xs = xs.clamp(0.0, static_cast<double>(w - 1));
  ys = ys.clamp(0.0, static_cast<double>(h - 1));
  const auto x0 = xs.floor().to(torch::kInt64);
  const auto y0 = ys.floor().to(torch::kInt64);
  const auto x1i = (x0 + 1).clamp_max(w - 1);
  const auto y1i = (y0 + 1).clamp_max(h - 1);
  const auto lx = (xs - x0.to(torch::kFloat64)).to(features.dtype());
  const auto ly = (ys - y0.to(torch::kFloat64)).to(features.dtype());

  // Flat indices over the P x P sample grid: [R, P, P] -> [R, P*P].
  auto flat = [&](const torch::Tensor& yi, const torch::Tensor& xi) {
    return (yi.unsqueeze(2) * w + xi.unsqueeze(1)).reshape({r, bins * bins});
  };
  const auto per_roi = features.index_select(0, regions.batch_index).reshape({r, c, h * w});
  auto gather = [&](const torch::Tensor& index) {
    return per_roi.gather(2, index.unsqueeze(1).expand({r, c, bins * bins}));
  };
  const auto wy1 = ly.unsqueeze(2).expand({r, bins, bins});
  const auto wx1 = lx.unsqueeze(1).expand({r, bins, bins});
  const auto wy0 = 1.0 - wy1;
  const auto wx0 = 1.0 - wx1;
  auto weight = [&](const torch::Tensor& a, const torch::Tensor& b) {
    return (a * b).reshape({r, 1, bins * bins});
  };
  auto pooled = gather(flat(y0, x0)) * weight(wy0, wx0) + gather(flat(y0, x1i)) * weight(wy0, wx1) +
                gather(flat(y1i, x0)) * weight(wy1, wx0) + gather(flat(y1i, x1i)) * weight(wy1, wx1);
  return {pooled.reshape({r, c, bins, bins}), std::move(clamped)};
}

ResBlockDownImpl::ResBlockDownImpl(std::int64_t in, std::int64_t out, bool downsample, bool preactivate)
    : downsample_(downsample), preactivate_(preactivate) {
  conv1_ = register_module("conv1", nn::SNConv2d(in, out, 3, 1));
  conv2_ = register_module("conv2", nn::SNConv2d(out, out, 3, 1));
  shortcut_ = register_module("shortcut", nn::SNConv2d(in, out, 1, 0));
}

torch::Tensor ResBlockDownImpl::forward(const torch::Tensor& x) {
  auto h = preactivate_ ? torch::relu(x) : x;
  h = conv2_(torch::relu(conv1_(h)));
  auto sc = shortcut_(x);
  if (downsample_) {
    h = F::avg_pool2d(h, F::AvgPool2dFuncOptions(2));
    sc = F::avg_pool2d(sc, F::AvgPool2dFuncOptions(2));
  }
  return h + sc;
}

DiscriminatorImpl::DiscriminatorImpl(const DiscriminatorOptions& options) : options_(options) {
  const auto c = options.base_channels;
  TORCH_CHECK(options.image_size % 8 == 0, "Discriminator: image_size must be a multiple of 8");
  const std::int64_t widths[] = {c, 2 * c, 4 * c, 8 * c};
  std::int64_t in = 3;
  for (int b = 0; b < 4; ++b) {
    // Three downsampling stages then one at the backbone resolution.
    backbone_.push_back(register_module("backbone" + std::to_string(b),
                                        ResBlockDown(in, widths[b], b < 3, b > 0)));
    in = widths[b];
  }
  image_block_ = register_module("image_block", ResBlockDown(in, in, true, true));
  image_out_ = register_module("image_out", nn::SNLinear(in, 1));
  region_proj_ = register_module("region_proj", nn::SNLinear(in, options.region_dim));
  psi_ = register_module("psi", nn::SNLinear(options.region_dim, 1));
  embed_proj_ = register_module("embed_proj", nn::SNLinear(options.embed_dim, options.region_dim, false));
}

torch::Tensor DiscriminatorImpl::backbone(const torch::Tensor& images) {
  TORCH_CHECK(images.dim() == 4 && images.size(1) == 3 && images.size(2) == options_.image_size &&
                  images.size(3) == options_.image_size,
              "Discriminator: expected images [N, 3, ", options_.image_size, ", ", options_.image_size, "]");
  auto x = images;
  for (auto& block : backbone_) x = block->forward(x);
  return x;
}

torch::Tensor DiscriminatorImpl::image_score(const torch::Tensor& feature_map) {
  auto x = torch::relu(image_block_->forward(feature_map));
  return image_out_(x.sum({2, 3})).squeeze(1);
}

RegionFeatures DiscriminatorImpl::extract_region_features(const torch::Tensor& feature_map,
                                                          const RegionList& regions) {
  auto roi = roi_align(torch::relu(feature_map), regions, options_.roi_bins);
  return {region_proj_(roi.pooled.mean({2, 3})), std::move(roi.clamped)};
}

torch::Tensor DiscriminatorImpl::project_embedding(const torch::Tensor& embeddings) {
  TORCH_CHECK(embeddings.size(-1) == options_.embed_dim, "Discriminator: embedding dimension ",
              embeddings.size(-1), " != ", options_.embed_dim);
  return embed_proj_(embeddings);
}

torch::Tensor DiscriminatorImpl::region_score(const torch::Tensor& phi, const torch::Tensor& embeddings) {
  TORCH_CHECK(phi.dim() == 2 && phi.size(1) == options_.region_dim, "region_score: phi must be [R, C_r]");
  TORCH_CHECK(embeddings.dim() == 2 && embeddings.size(0) == phi.size(0), "region_score: one embedding per region");
  return psi_(phi).squeeze(1) + (project_embedding(embeddings) * phi).sum(1);
}

torch::Tensor DiscriminatorImpl::multimodal_feature(const torch::Tensor& phi, const torch::Tensor& embeddings) {
  return phi * project_embedding(embeddings);
}

DiscriminatorOutput DiscriminatorImpl::forward(const torch::Tensor& images, const RegionList& regions,
                                               const torch::Tensor& embeddings) {
  if (regions.boxes.size(0) == 0) throw std::invalid_argument("discriminate: at least one region required");
  TORCH_CHECK(embeddings.size(0) == regions.boxes.size(0), "discriminate: |boxes| != |embeddings|");
  const auto fmap = backbone(images);
  auto rf = extract_region_features(fmap, regions);
  DiscriminatorOutput out;
  out.image_score = image_score(fmap);
  out.region_scores = region_score(rf.features, embeddings);
  out.multimodal = multimodal_feature(rf.features, embeddings);
  out.region_features = rf.features;
  out.clamped = std::move(rf.clamped);
  return out;
}

}  // namespace dtc::disc
