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
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dtc/batch.hpp"
#include "dtc/discriminator.hpp"
#include "dtc/losses.hpp"

namespace dtc::eval {

inline constexpr std::int64_t kOracleFeatureDim = 64;

struct OracleOptions {
  std::int64_t crop_size = 24;
  double window = 0.375;  // square window side, normalized
};

struct OracleOutput {
  torch::Tensor color;    // [R, 8] logits
  torch::Tensor shape;    // [R, 3]
  torch::Tensor size;     // [R, 2]
  torch::Tensor texture;  // [R, 2]
  torch::Tensor features;  // [R, 64]
};

/// Attribute classifier over fixed-size windows around single objects.
class OracleImpl : public torch::nn::Module {
 public:
  explicit OracleImpl(const OracleOptions& options = {});
  OracleOutput forward(const torch::Tensor& crops);
  /// Activations after the second and fourth convolutions.
  std::vector<torch::Tensor> perceptual_features(const torch::Tensor& images);
  /// Pooled penultimate feature of whole images, [N, 64].
  torch::Tensor image_features(const torch::Tensor& images);
  const OracleOptions& options() const { return options_; }

 private:
  torch::Tensor trunk(const torch::Tensor& x, std::vector<torch::Tensor>* taps);
  OracleOptions options_;
  torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr}, conv3_{nullptr}, conv4_{nullptr};
  torch::nn::Linear fc_{nullptr};
  torch::nn::Linear color_{nullptr}, shape_{nullptr}, size_{nullptr}, texture_{nullptr};
};
TORCH_MODULE(Oracle);

/// Window boxes of side `window` centred on each box and shifted to lie inside the image.
torch::Tensor centered_windows(const torch::Tensor& boxes, double window);
torch::Tensor oracle_crops(const torch::Tensor& images, const disc::RegionList& regions, const OracleOptions& opts);

/// Attribute targets per region; -1 marks an attribute that is not scored.
struct AttributeLabels {
  torch::Tensor color, shape, size, texture;  // [R] int64
};

/// Single-object regions of a split: which image, which box, and the labels.
struct SingletonSet {
  std::vector<std::int64_t> image_index;
  torch::Tensor boxes;  // [R, 4]
  AttributeLabels truth;   // ground-truth object attributes
  AttributeLabels stated;  // attributes mentioned in the caption; others -1
  std::int64_t size() const { return static_cast<std::int64_t>(image_index.size()); }
};
SingletonSet collect_singletons(const data::SampleSet& set);

struct AttributeAccuracy {
  double color = 0, shape = 0, size = 0, texture = 0;
  std::int64_t color_n = 0, shape_n = 0, size_n = 0, texture_n = 0;
  nlohmann::json to_json() const;
};

/// Fraction of correct predictions per attribute, counting only labels >= 0.
AttributeAccuracy score_attributes(const OracleOutput& out, const AttributeLabels& labels);

/// ||mu_A - mu_B||^2 + Tr(S_A + S_B - 2 (S_A S_B)^(1/2)), in double precision.
double frechet_feature_distance(const torch::Tensor& feats_a, const torch::Tensor& feats_b);

/// Top-1 rate of the true candidate. `score(query, candidates)` returns
/// one score per candidate; candidate 0 is the truth.
double top1_rate(std::int64_t queries, const std::function<std::vector<std::int64_t>(std::int64_t)>& candidates,
                 const std::function<torch::Tensor(std::int64_t, const std::vector<std::int64_t>&)>& score);

/// For each query, the true index followed by n-1 distractors whose key
/// string differs from the query's and from each other. Deterministic in seed.
std::vector<std::vector<std::int64_t>> draw_candidates(const std::vector<std::string>& keys, std::int64_t n,
                                                       std::uint64_t seed);

struct MetricsReport {
  double frechet_image = 0;
  double frechet_region = 0;
  double frechet_noise = 0;  // uniform noise images vs the same real set
  AttributeAccuracy attr_accuracy;
  AttributeAccuracy real_attr_accuracy;
  double r_precision_top1 = 0;
  double real_r_precision_top1 = 0;
  std::int64_t r_precision_candidates = 10;
  std::int64_t n_images = 0;
  std::int64_t n_regions = 0;
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  std::string split;
  nlohmann::json to_json() const;
  static MetricsReport from_json(const nlohmann::json& j);
};

}  // namespace dtc::eval
