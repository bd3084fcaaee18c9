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

#include <functional>
#include <vector>

namespace dtc::loss {

struct LossWeights {
  double lambda_image = 0.1;   // lambda_1
  double lambda_region = 1.0;  // lambda_2
  double damsm = 1.0;
  double mmrfm = 1.0;
  double perceptual = 1.0;
  double pixel = 1.0;

  void validate() const;
};

struct DamsmConfig {
  double gamma1 = 5.0;   // attention sharpness over locations
  double gamma2 = 5.0;   // word aggregation
  double gamma3 = 10.0;  // posterior temperature

  void validate() const;
};

/// Region scores grouped by image: scores [N, M] with valid [N, M]. Means are
/// taken over an image's valid regions, then over images that have any.
struct RegionScores {
  torch::Tensor scores;
  torch::Tensor valid;

  /// Treats a flat [R] vector as R images with one region each.
  static RegionScores flat(const torch::Tensor& scores);
  /// Scatters a flat [R] vector back to [N, M] using the valid pattern.
  static RegionScores scatter(const torch::Tensor& flat_scores, const torch::Tensor& valid);
};

/// Mean over regions per image, then over images.
torch::Tensor grouped_mean(const RegionScores& values);

/// mean(max(0, 1 - s_real)) + mean(max(0, 1 + s_fake))
torch::Tensor d_hinge_image(const torch::Tensor& s_real, const torch::Tensor& s_fake);

/// Real/matching, fake/matching and real/mismatching hinge terms summed.
torch::Tensor d_hinge_region(const RegionScores& real_match, const RegionScores& fake_match,
                             const RegionScores& real_mismatch);

/// lambda_1 * L_X + lambda_2 * L_R
torch::Tensor d_total(const torch::Tensor& l_image, const torch::Tensor& l_region, const LossWeights& w);

/// -lambda_1 * mean(s_x) - lambda_2 * mean(s_r)
torch::Tensor g_adversarial(const torch::Tensor& s_x_fake, const RegionScores& s_r_fake_match,
                            const LossWeights& w);

/// Image side of a DAMSM pair batch.
struct DamsmImageFeatures {
  torch::Tensor local;   // [B, L, D] location features
  torch::Tensor global;  // [B, D_e]
};

/// Text side of a DAMSM pair batch.
struct DamsmTextFeatures {
  torch::Tensor words;     // [B, T, D]
  torch::Tensor mask;      // [B, T] bool
  torch::Tensor sentence;  // [B, D_e]
};

/// Word-level match score R(image i, caption j) for every pair, [B_img, B_txt].
torch::Tensor damsm_word_scores(const torch::Tensor& local, const torch::Tensor& words, const torch::Tensor& mask,
                                const DamsmConfig& cfg);
/// Cosine of global vectors for every pair, [B_img, B_txt].
torch::Tensor damsm_sentence_scores(const torch::Tensor& global, const torch::Tensor& sentence);

struct DamsmLossTerms {
  torch::Tensor word_i2t;
  torch::Tensor word_t2i;
  torch::Tensor sentence_i2t;
  torch::Tensor sentence_t2i;
  torch::Tensor total() const { return word_i2t + word_t2i + sentence_i2t + sentence_t2i; }
};

/// Symmetric in-batch cross-entropies (mean over the batch) for word- and
/// sentence-level matching; pair i of each side matches.
DamsmLossTerms damsm_loss_terms(const DamsmImageFeatures& image, const DamsmTextFeatures& text,
                                const DamsmConfig& cfg);
torch::Tensor damsm_loss(const DamsmImageFeatures& image, const DamsmTextFeatures& text, const DamsmConfig& cfg);

/// Mean over regions of the mean absolute difference. Real features are
/// detached so only the generated branch receives gradient.
torch::Tensor mmrfm_loss(const torch::Tensor& f_real, const torch::Tensor& f_fake);

/// Feature maps from a frozen network, one per designated layer.
using FeatureExtractor = std::function<std::vector<torch::Tensor>(const torch::Tensor&)>;

struct ReconstructionLosses {
  torch::Tensor perceptual;
  torch::Tensor pixel;
};

ReconstructionLosses reconstruction_losses(const torch::Tensor& x_real, const torch::Tensor& x_fake,
                                           const FeatureExtractor& features);

}  // namespace dtc::loss
