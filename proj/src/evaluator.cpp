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

#include "dtc/evaluator.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>

namespace dtc::eval {

OracleImpl::OracleImpl(const OracleOptions& options) : options_(options) {
  using torch::nn::Conv2dOptions;
  conv1_ = register_module("conv1", torch::nn::Conv2d(Conv2dOptions(3, 32, 3).padding(1)));
  conv2_ = register_module("conv2", torch::nn::Conv2d(Conv2dOptions(32, 64, 3).stride(2).padding(1)));
  conv3_ = register_module("conv3", torch::nn::Conv2d(Conv2dOptions(64, 64, 3).padding(1)));
  conv4_ = register_module("conv4", torch::nn::Conv2d(Conv2dOptions(64, 128, 3).stride(2).padding(1)));
  fc_ = register_module("fc", torch::nn::Linear(128, kOracleFeatureDim));
  color_ = register_module("color", torch::nn::Linear(kOracleFeatureDim, scene::kNumColors));
  shape_ = register_module("shape", torch::nn::Linear(kOracleFeatureDim, scene::kNumShapes));
  size_ = register_module("size", torch::nn::Linear(kOracleFeatureDim, scene::kNumSizes));
  texture_ = register_module("texture", torch::nn::Linear(kOracleFeatureDim, scene::kNumTextures));
}

torch::Tensor OracleImpl::trunk(const torch::Tensor& x, std::vector<torch::Tensor>* taps) {
  auto h = torch::relu(conv1_(x));
  h = torch::relu(conv2_(h));
  if (taps) taps->push_back(h);
  h = torch::relu(conv3_(h));
  h = torch::relu(conv4_(h));
  if (taps) taps->push_back(h);
  return h;
}

OracleOutput OracleImpl::forward(const torch::Tensor& crops) {
  TORCH_CHECK(crops.dim() == 4 && crops.size(1) == 3, "Oracle: crops must be [R, 3, h, w]");
  const auto f = torch::relu(fc_(trunk(crops, nullptr).mean({2, 3})));
  return {color_(f), shape_(f), size_(f), texture_(f), f};
}

std::vector<torch::Tensor> OracleImpl::perceptual_features(const torch::Tensor& images) {
  std::vector<torch::Tensor> taps;
  trunk(images, &taps);
  return taps;
}

torch::Tensor OracleImpl::image_features(const torch::Tensor& images) {
  return torch::relu(fc_(trunk(images, nullptr).mean({2, 3})));
}

torch::Tensor centered_windows(const torch::Tensor& boxes, double window) {
  TORCH_CHECK(boxes.dim() == 2 && boxes.size(1) == 4, "centered_windows: boxes must be [R, 4]");
  const double half = window / 2.0;
  const auto cx = ((boxes.select(1, 0) + boxes.select(1, 2)) / 2).clamp(half, 1.0 - half);
  const auto cy = ((boxes.select(1, 1) + boxes.select(1, 3)) / 2).clamp(half, 1.0 - half);
  return torch::stack({cx - half, cy - half, cx + half, cy + half}, 1);
}

torch::Tensor oracle_crops(const torch::Tensor& images, const disc::RegionList& regions, const OracleOptions& opts) {
  const disc::RegionList windows{centered_windows(regions.boxes, opts.window), regions.batch_index};
  return disc::roi_align(images, windows, opts.crop_size).pooled;
}

SingletonSet collect_singletons(const data::SampleSet& set) {
  SingletonSet out;
  std::vector<float> boxes;
  std::vector<std::int64_t> tc, ts, tz, tt, sc, ss, sz, st;
  for (std::int64_t i = 0; i < set.size(); ++i) {
    for (const auto& item : set.regions[static_cast<std::size_t>(i)]) {
      if (!item.object) continue;
      const auto parsed = scene::parse_caption(item.caption);
      if (!parsed || parsed->objects.size() != 1) {
        throw std::runtime_error("collect_singletons: caption outside the grammar: '" + item.caption + "'");
      }
      const auto& d = parsed->objects.front();
      const auto& o = *item.object;
      out.image_index.push_back(i);
      boxes.insert(boxes.end(), {static_cast<float>(item.box.x1), static_cast<float>(item.box.y1),
                                 static_cast<float>(item.box.x2), static_cast<float>(item.box.y2)});
      tc.push_back(static_cast<std::int64_t>(o.color));
      ts.push_back(static_cast<std::int64_t>(o.shape));
      tz.push_back(static_cast<std::int64_t>(o.size));
      tt.push_back(static_cast<std::int64_t>(o.texture));
      sc.push_back(static_cast<std::int64_t>(d.color));
      ss.push_back(static_cast<std::int64_t>(d.shape));
      sz.push_back(static_cast<std::int64_t>(d.size));
      st.push_back(d.texture ? static_cast<std::int64_t>(*d.texture) : -1);
    }
  }
  const auto r = static_cast<std::int64_t>(out.image_index.size());
  out.boxes = torch::tensor(boxes).reshape({r, 4});
  auto t = [](const std::vector<std::int64_t>& v) { return torch::tensor(v, torch::kInt64); };
  out.truth = {t(tc), t(ts), t(tz), t(tt)};
  out.stated = {t(sc), t(ss), t(sz), t(st)};
  return out;
}

nlohmann::json AttributeAccuracy::to_json() const {
  return {{"color", color}, {"shape", shape}, {"size", size}, {"texture", texture},
          {"counts", {{"color", color_n}, {"shape", shape_n}, {"size", size_n}, {"texture", texture_n}}}};
}

AttributeAccuracy score_attributes(const OracleOutput& out, const AttributeLabels& labels) {
  auto score = [](const torch::Tensor& logits, const torch::Tensor& target, double& acc, std::int64_t& n) {
    const auto keep = target >= 0;
    n = keep.sum().item<std::int64_t>();
    if (n == 0) {
      acc = 0.0;
      return;
    }
    const auto hit = (logits.argmax(1) == target) & keep;
    acc = hit.sum().item<double>() / static_cast<double>(n);
  };
  AttributeAccuracy a;
  score(out.color, labels.color, a.color, a.color_n);
  score(out.shape, labels.shape, a.shape, a.shape_n);
  score(out.size, labels.size, a.size, a.size_n);
  score(out.texture, labels.texture, a.texture, a.texture_n);
  return a;
}

double frechet_feature_distance(const torch::Tensor& feats_a, const torch::Tensor& feats_b) {
  if (feats_a.dim() != 2 || feats_b.dim() != 2) throw std::invalid_argument("frechet: features must be [n, d]");
  if (feats_a.size(1) != feats_b.size(1)) throw std::invalid_argument("frechet: feature dimensions differ");
  if (feats_a.size(0) < 2 || feats_b.size(0) < 2) throw std::invalid_argument("frechet: need at least 2 samples per set");
  torch::NoGradGuard no_grad;
  auto moments = [](const torch::Tensor& x) {
    const auto xd = x.to(torch::kFloat64);
    const auto mu = xd.mean(0);
    const auto c = xd - mu;
    return std::pair{mu, c.t().mm(c) / static_cast<double>(xd.size(0) - 1)};
  };
  const auto [mu_a, cov_a] = moments(feats_a);
  const auto [mu_b, cov_b] = moments(feats_b);
  const auto [wa, va] = torch::linalg_eigh((cov_a + cov_a.t()) / 2);
  const auto sqrt_a = va.mm(torch::diag(wa.clamp_min(0).sqrt())).mm(va.t());
  auto inner = sqrt_a.mm(cov_b).mm(sqrt_a);
  inner = (inner + inner.t()) / 2;
  const auto trace_sqrt = torch::linalg_eigvalsh(inner).clamp_min(0).sqrt().sum().item<double>();
  const double d = (mu_a - mu_b).pow(2).sum().item<double>() + cov_a.trace().item<double>() +
                   cov_b.trace().item<double>() - 2.0 * trace_sqrt;
  return std::max(d, 0.0);
}

double top1_rate(std::int64_t queries, const std::function<std::vector<std::int64_t>(std::int64_t)>& candidates,
                 const std::function<torch::Tensor(std::int64_t, const std::vector<std::int64_t>&)>& score) {
  if (queries < 1) throw std::invalid_argument("top1_rate: no queries");
  std::int64_t hits = 0;
  for (std::int64_t q = 0; q < queries; ++q) {
    const auto s = score(q, candidates(q)).to(torch::kFloat64).flatten();
    const double truth = s[0].item<double>();
    if (s.numel() == 1 || truth > s.slice(0, 1).max().item<double>()) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(queries);
}

std::vector<std::vector<std::int64_t>> draw_candidates(const std::vector<std::string>& keys, std::int64_t n,
                                                       std::uint64_t seed) {
  const auto total = static_cast<std::int64_t>(keys.size());
  std::set<std::string> distinct(keys.begin(), keys.end());
  if (n < 1 || static_cast<std::int64_t>(distinct.size()) < n) {
    throw std::invalid_argument("draw_candidates: fewer distinct items than candidates");
  }
  std::vector<std::vector<std::int64_t>> out;
  out.reserve(keys.size());
  for (std::int64_t q = 0; q < total; ++q) {
    std::mt19937_64 rng(scene::derive_seed(seed, static_cast<std::uint64_t>(q)));
    std::uniform_int_distribution<std::int64_t> pick(0, total - 1);
    std::vector<std::int64_t> c{q};
    std::set<std::string> used{keys[static_cast<std::size_t>(q)]};
    while (static_cast<std::int64_t>(c.size()) < n) {
      const auto j = pick(rng);
      if (used.insert(keys[static_cast<std::size_t>(j)]).second) c.push_back(j);
    }
    out.push_back(std::move(c));
  }
  return out;
}

nlohmann::json MetricsReport::to_json() const {
  return {{"frechet_image", frechet_image},
          {"frechet_region", frechet_region},
          {"frechet_noise", frechet_noise},
          {"attr_accuracy", attr_accuracy.to_json()},
          {"real_attr_accuracy", real_attr_accuracy.to_json()},
          {"r_precision_top1", r_precision_top1},
          {"real_r_precision_top1", real_r_precision_top1},
          {"r_precision_candidates", r_precision_candidates},
          {"n_images", n_images},
          {"n_regions", n_regions},
          {"config_hash", config_hash},
          {"seed", seed},
          {"split", split}};
}

MetricsReport MetricsReport::from_json(const nlohmann::json& j) {
  auto acc = [](const nlohmann::json& a) {
    AttributeAccuracy r;
    r.color = a.at("color");
    r.shape = a.at("shape");
    r.size = a.at("size");
    r.texture = a.at("texture");
    const auto& c = a.at("counts");
    r.color_n = c.at("color");
    r.shape_n = c.at("shape");
    r.size_n = c.at("size");
    r.texture_n = c.at("texture");
    return r;
  };
  MetricsReport m;
  m.frechet_image = j.at("frechet_image");
  m.frechet_region = j.at("frechet_region");
  m.frechet_noise = j.at("frechet_noise");
  m.attr_accuracy = acc(j.at("attr_accuracy"));
  m.real_attr_accuracy = acc(j.at("real_attr_accuracy"));
  m.r_precision_top1 = j.at("r_precision_top1");
  m.real_r_precision_top1 = j.at("real_r_precision_top1");
  m.r_precision_candidates = j.at("r_precision_candidates");
  m.n_images = j.at("n_images");
  m.n_regions = j.at("n_regions");
  m.config_hash = j.at("config_hash");
  m.seed = j.at("seed");
  m.split = j.at("split");
  return m;
}

}  // namespace dtc::eval
