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

#include "dtc/losses.hpp"

#include <limits>
#include <stdexcept>

namespace dtc::loss {

namespace F = torch::nn::functional;

namespace {

constexpr double kCosEps = 1e-8;

torch::Tensor l2_normalize(const torch::Tensor& x) {
  return x / x.norm(2, -1, true).clamp_min(kCosEps);
}

torch::Tensor symmetric_targets(std::int64_t b) { return torch::arange(b, torch::kInt64); }

}  // namespace

void LossWeights::validate() const {
  for (double v : {lambda_image, lambda_region, damsm, mmrfm, perceptual, pixel}) {
    if (!(v >= 0.0)) throw std::invalid_argument("LossWeights: all weights must be >= 0");
  }
}

void DamsmConfig::validate() const {
  if (!(gamma1 > 0 && gamma2 > 0 && gamma3 > 0)) throw std::invalid_argument("DamsmConfig: gammas must be > 0");
}

RegionScores RegionScores::flat(const torch::Tensor& scores) {
  TORCH_CHECK(scores.dim() == 1, "RegionScores::flat: expected [R]");
  return {scores.unsqueeze(1), torch::ones({scores.size(0), 1}, torch::kBool)};
}

RegionScores RegionScores::scatter(const torch::Tensor& flat_scores, const torch::Tensor& valid) {
  TORCH_CHECK(flat_scores.dim() == 1 && flat_scores.size(0) == valid.sum().item<std::int64_t>(),
              "RegionScores::scatter: one score per valid region");
  auto full = torch::zeros(valid.sizes(), flat_scores.options());
  full = full.masked_scatter(valid, flat_scores);
  return {full, valid};
}

torch::Tensor grouped_mean(const RegionScores& values) {
  TORCH_CHECK(values.scores.sizes() == values.valid.sizes(), "grouped_mean: scores/valid shape mismatch");
  TORCH_CHECK(values.scores.dim() == 2, "grouped_mean: expected [N, M]");
  const auto vf = values.valid.to(values.scores.dtype());
  const auto counts = vf.sum(1);
  const auto has = counts > 0;
  if (!has.any().item<bool>()) throw std::invalid_argument("grouped_mean: no valid regions");
  const auto per_image = (values.scores * vf).sum(1) / counts.clamp_min(1.0);
  return per_image.masked_select(has).mean();
}

torch::Tensor d_hinge_image(const torch::Tensor& s_real, const torch::Tensor& s_fake) {
  if (s_real.numel() == 0 || s_fake.numel() == 0) throw std::invalid_argument("d_hinge_image: empty batch");
  return torch::relu(1.0 - s_real).mean() + torch::relu(1.0 + s_fake).mean();
}

torch::Tensor d_hinge_region(const RegionScores& real_match, const RegionScores& fake_match,
                             const RegionScores& real_mismatch) {
  if (real_match.scores.sizes() != fake_match.scores.sizes() ||
      real_match.scores.sizes() != real_mismatch.scores.sizes()) {
    throw std::invalid_argument("d_hinge_region: region counts differ between the three pair types");
  }
  auto term = [](const RegionScores& s, double sign) {
    return grouped_mean({torch::relu(1.0 + sign * s.scores), s.valid});
  };
  auto loss = term(real_match, -1.0) + term(fake_match, 1.0);
  if (real_mismatch.valid.any().item<bool>()) loss = loss + term(real_mismatch, 1.0);
  return loss;
}

torch::Tensor d_total(const torch::Tensor& l_image, const torch::Tensor& l_region, const LossWeights& w) {
  return w.lambda_image * l_image + w.lambda_region * l_region;
}

torch::Tensor g_adversarial(const torch::Tensor& s_x_fake, const RegionScores& s_r_fake_match,
                            const LossWeights& w) {
  if (s_x_fake.numel() == 0) throw std::invalid_argument("g_adversarial: empty batch");
  return -w.lambda_image * s_x_fake.mean() - w.lambda_region * grouped_mean(s_r_fake_match);
}

torch::Tensor damsm_word_scores(const torch::Tensor& local, const torch::Tensor& words, const torch::Tensor& mask,
                                const DamsmConfig& cfg) {
  TORCH_CHECK(local.dim() == 3 && words.dim() == 3 && local.size(2) == words.size(2),
              "damsm_word_scores: expected local [B, L, D] and words [B, T, D]");
  TORCH_CHECK(mask.sizes() == words.sizes().slice(0, 2), "damsm_word_scores: mask must be [B, T]");
  const auto bi = local.size(0);
  const auto l = local.size(1);
  const auto bt = words.size(0);
  const auto t = words.size(1);
  const auto d = local.size(2);
  const auto v = l2_normalize(local);  // [Bi, L, D]
  const auto e = l2_normalize(words);  // [Bt, T, D]
  const auto sim = torch::mm(e.reshape({bt * t, d}), v.reshape({bi * l, d}).t()).reshape({bt, t, bi, l}).permute({2, 0, 1, 3});
  const auto attn = torch::softmax(cfg.gamma1 * sim, -1);  // [Bi, Bt, T, L]
  // With unit-norm locations, context . word = sum_l attn * sim and
  // |context|^2 = attn^T (V V^T) attn, so the context vectors never materialize.
  const auto dot = (attn * sim).sum(-1);
  const auto gram = torch::bmm(v, v.transpose(1, 2));  // [Bi, L, L]
  const auto norm_sq = (torch::bmm(attn.reshape({bi, bt * t, l}), gram).reshape({bi, bt, t, l}) * attn).sum(-1);
  const auto relevance = dot / norm_sq.clamp_min(kCosEps * kCosEps).sqrt();  // [Bi, Bt, T]
  const auto logits = (cfg.gamma2 * relevance).masked_fill(~mask.unsqueeze(0), -std::numeric_limits<double>::infinity());
  return torch::logsumexp(logits, -1) / cfg.gamma2;
}

torch::Tensor damsm_sentence_scores(const torch::Tensor& global, const torch::Tensor& sentence) {
  TORCH_CHECK(global.dim() == 2 && sentence.dim() == 2 && global.size(1) == sentence.size(1),
              "damsm_sentence_scores: expected [B, D_e] inputs");
  return torch::mm(l2_normalize(global), l2_normalize(sentence).t());
}

DamsmLossTerms damsm_loss_terms(const DamsmImageFeatures& image, const DamsmTextFeatures& text,
                                const DamsmConfig& cfg) {
  cfg.validate();
  const auto b = image.global.size(0);
  if (b < 1) throw std::invalid_argument("damsm_loss: at least one matching pair required");
  TORCH_CHECK(text.sentence.size(0) == b && image.local.size(0) == b && text.words.size(0) == b,
              "damsm_loss: image and text batches differ in size");
  const auto targets = symmetric_targets(b);
  const auto word = cfg.gamma3 * damsm_word_scores(image.local, text.words, text.mask, cfg);
  const auto sent = cfg.gamma3 * damsm_sentence_scores(image.global, text.sentence);
  return {F::cross_entropy(word, targets), F::cross_entropy(word.t(), targets), F::cross_entropy(sent, targets),
          F::cross_entropy(sent.t(), targets)};
}

torch::Tensor damsm_loss(const DamsmImageFeatures& image, const DamsmTextFeatures& text, const DamsmConfig& cfg) {
  return damsm_loss_terms(image, text, cfg).total();
}

torch::Tensor mmrfm_loss(const torch::Tensor& f_real, const torch::Tensor& f_fake) {
  if (f_real.sizes() != f_fake.sizes()) {
    throw std::invalid_argument("mmrfm_loss: real and generated region counts differ");
  }
  if (f_real.numel() == 0) throw std::invalid_argument("mmrfm_loss: no regions");
  return (f_fake - f_real.detach()).abs().mean();
}

ReconstructionLosses reconstruction_losses(const torch::Tensor& x_real, const torch::Tensor& x_fake,
                                           const FeatureExtractor& features) {
  if (x_real.sizes() != x_fake.sizes()) throw std::invalid_argument("reconstruction_losses: shape mismatch");
  const auto pixel = (x_real - x_fake).abs().mean();
  std::vector<torch::Tensor> real_feats;
  {
    torch::NoGradGuard no_grad;
    real_feats = features(x_real);
  }
  const auto fake_feats = features(x_fake);
  TORCH_CHECK(real_feats.size() == fake_feats.size(), "reconstruction_losses: feature layer count differs");
  auto perceptual = torch::zeros({}, x_fake.options());
  for (std::size_t i = 0; i < fake_feats.size(); ++i) {
    perceptual = perceptual + (fake_feats[i] - real_feats[i]).abs().mean();
  }
  return {perceptual, pixel};
}

}  // namespace dtc::loss
