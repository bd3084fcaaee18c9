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

#include "dtc/metrics.hpp"

#include <numeric>
#include <stdexcept>

namespace dtc::eval {

namespace {

constexpr std::int64_t kChunk = 64;

std::vector<std::int64_t> iota(std::int64_t begin, std::int64_t end) {
  std::vector<std::int64_t> v(static_cast<std::size_t>(end - begin));
  std::iota(v.begin(), v.end(), begin);
  return v;
}

/// Runs `fn` over [0, n) in chunks and concatenates the results on dim 0.
template <typename Fn>
torch::Tensor chunked(std::int64_t n, Fn fn) {
  std::vector<torch::Tensor> parts;
  for (std::int64_t b = 0; b < n; b += kChunk) parts.push_back(fn(b, std::min(n, b + kChunk)));
  return torch::cat(parts);
}

torch::Tensor all_real_images(const data::SampleSet& split) {
  return chunked(split.size(), [&](std::int64_t b, std::int64_t e) { return data::images_at(split, iota(b, e)); });
}

torch::Tensor scene_sentences(Models& models, const data::SampleSet& split) {
  return chunked(split.size(), [&](std::int64_t b, std::int64_t e) {
    std::vector<text::TokenSeq> seqs(split.scene_tokens.begin() + b, split.scene_tokens.begin() + e);
    const auto [ids, lengths] = text::batch_tokens(seqs);
    return models.text->forward(ids, lengths).sentence;
  });
}

torch::Tensor whole_image_globals(Models& models, const torch::Tensor& images) {
  const auto crop = models.config.damsm_crop;
  return chunked(images.size(0), [&](std::int64_t b, std::int64_t e) {
    const auto x = images.slice(0, b, e);
    const disc::RegionList whole{torch::tensor({0.0f, 0.0f, 1.0f, 1.0f}).repeat({e - b, 1}),
                                 torch::arange(e - b, torch::kInt64)};
    return models.image_encoder->forward(damsm::crop_regions(x, whole, crop)).global;
  });
}

}  // namespace

double damsm_retrieval_top1(Models& models, const data::SampleSet& split, std::int64_t n_candidates,
                            std::uint64_t seed) {
  torch::NoGradGuard no_grad;
  models.text->eval();
  models.image_encoder->eval();
  std::vector<std::string> captions;
  std::vector<text::TokenSeq> tokens;
  std::vector<float> boxes;
  std::vector<std::int64_t> owner;
  for (std::int64_t i = 0; i < split.size(); ++i) {
    for (const auto& item : split.regions[static_cast<std::size_t>(i)]) {
      captions.push_back(item.caption);
      tokens.push_back(item.tokens);
      boxes.insert(boxes.end(), {static_cast<float>(item.box.x1), static_cast<float>(item.box.y1),
                                 static_cast<float>(item.box.x2), static_cast<float>(item.box.y2)});
      owner.push_back(i);
    }
  }
  const auto r = static_cast<std::int64_t>(captions.size());
  const auto all_boxes = torch::tensor(boxes).reshape({r, 4});
  std::vector<torch::Tensor> locals;
  std::vector<torch::Tensor> globals;
  for (std::int64_t b = 0; b < r; b += kChunk) {
    const auto e = std::min(r, b + kChunk);
    std::vector<std::int64_t> imgs(owner.begin() + b, owner.begin() + e);
    const auto x = data::images_at(split, imgs);
    const disc::RegionList regions{all_boxes.slice(0, b, e), torch::arange(e - b, torch::kInt64)};
    const auto f = models.image_encoder->forward(damsm::crop_regions(x, regions, models.config.damsm_crop));
    locals.push_back(f.local);
    globals.push_back(f.global);
  }
  const loss::DamsmImageFeatures image{torch::cat(locals), torch::cat(globals)};
  const auto [ids, lengths] = text::batch_tokens(tokens);
  const auto txt = models.text->forward(ids, lengths);
  const auto cands = draw_candidates(captions, n_candidates, seed);
  return top1_rate(
      r, [&](std::int64_t q) { return cands[static_cast<std::size_t>(q)]; },
      [&](std::int64_t q, const std::vector<std::int64_t>& c) {
        const auto idx = torch::tensor(c);
        const loss::DamsmImageFeatures one{image.local.slice(0, q, q + 1), image.global.slice(0, q, q + 1)};
        const loss::DamsmTextFeatures t{txt.words.index_select(0, idx), txt.mask.index_select(0, idx),
                                        txt.sentence.index_select(0, idx)};
        return damsm::match_scores(one, t, models.config.damsm);
      });
}

torch::Tensor generate_split(Models& models, const data::SampleSet& split, std::uint64_t seed) {
  torch::NoGradGuard no_grad;
  models.text->eval();
  auto& g = models.inference_generator();
  g->eval();
  const auto opts = g->options();
  return chunked(split.size(), [&](std::int64_t b, std::int64_t e) {
    const auto idx = iota(b, e);
    const auto batch = data::make_batch(split, idx, opts.max_regions, scene::derive_seed(seed, 0));
    const auto words = models.text->forward(disc::flatten_valid(batch.token_ids, batch.valid),
                                            disc::flatten_valid(batch.lengths, batch.valid));
    const auto e_full = scatter_regions(words.sentence, batch.valid);
    const auto m = batch.valid.size(1);
    std::vector<torch::Tensor> zi;
    std::vector<torch::Tensor> zr;
    for (auto i : idx) {
      const auto global = scene::derive_seed(seed, static_cast<std::uint64_t>(i) + 1);
      std::vector<std::uint64_t> region_seeds;
      for (std::int64_t j = 0; j < m; ++j) region_seeds.push_back(scene::derive_seed(global, static_cast<std::uint64_t>(j) + 1));
      const auto lat = latents_from_seeds(opts, global, region_seeds);
      zi.push_back(lat.z_img);
      zr.push_back(lat.z_regions);
    }
    return gen::generate(g, {torch::stack(zi), torch::stack(zr),
                             gen::LayoutBatch{batch.boxes, batch.valid, e_full}});
  });
}

AttributeAccuracy region_attribute_accuracy(Models& models, const torch::Tensor& images,
                                            const data::SampleSet& split) {
  torch::NoGradGuard no_grad;
  models.oracle->eval();
  const auto singles = collect_singletons(split);
  if (singles.size() == 0) throw std::invalid_argument("region_attribute_accuracy: split has no single-object regions");
  const auto idx = torch::tensor(singles.image_index);
  const auto crops = oracle_crops(images, {singles.boxes, idx}, models.oracle->options());
  return score_attributes(models.oracle->forward(crops), singles.stated);
}

double r_precision_with(const torch::Tensor& scores, const data::SampleSet& split, std::int64_t n_candidates,
                        std::uint64_t seed) {
  if (split.size() < n_candidates) throw std::invalid_argument("r_precision: split smaller than the candidate pool");
  const auto cands = draw_candidates(split.scene_text, n_candidates, seed);
  return top1_rate(
      split.size(), [&](std::int64_t q) { return cands[static_cast<std::size_t>(q)]; },
      [&](std::int64_t q, const std::vector<std::int64_t>& c) { return scores[q].index_select(0, torch::tensor(c)); });
}

double r_precision(Models& models, const torch::Tensor& images, const data::SampleSet& split,
                   std::int64_t n_candidates, std::uint64_t seed) {
  torch::NoGradGuard no_grad;
  models.text->eval();
  models.image_encoder->eval();
  const auto globals = whole_image_globals(models, images);
  const auto sentences = scene_sentences(models, split);
  return r_precision_with(loss::damsm_sentence_scores(globals, sentences), split, n_candidates, seed);
}

torch::Tensor uniform_noise_images(const torch::Tensor& like, std::uint64_t seed) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  return at::rand(like.sizes(), gen, torch::TensorOptions().dtype(torch::kFloat32)) * 2 - 1;
}

MetricsReport evaluate(Models& models, const data::SampleSet& split, std::uint64_t seed, std::int64_t n_candidates) {
  torch::NoGradGuard no_grad;
  models.oracle->eval();
  const auto real = all_real_images(split);
  const auto fake = generate_split(models, split, seed);
  const auto noise = uniform_noise_images(real, scene::derive_seed(seed, 7));
  auto image_feats = [&](const torch::Tensor& x) {
    return chunked(x.size(0), [&](std::int64_t b, std::int64_t e) {
      return models.oracle->image_features(x.slice(0, b, e));
    });
  };
  const auto f_real = image_feats(real);
  MetricsReport rep;
  rep.frechet_image = frechet_feature_distance(image_feats(fake), f_real);
  rep.frechet_noise = frechet_feature_distance(image_feats(noise), f_real);

  const auto singles = collect_singletons(split);
  const auto idx = torch::tensor(singles.image_index);
  const auto opts = models.oracle->options();
  const auto region_real = models.oracle->forward(oracle_crops(real, {singles.boxes, idx}, opts));
  const auto region_fake = models.oracle->forward(oracle_crops(fake, {singles.boxes, idx}, opts));
  rep.frechet_region = frechet_feature_distance(region_fake.features, region_real.features);
  rep.attr_accuracy = score_attributes(region_fake, singles.stated);
  rep.real_attr_accuracy = score_attributes(region_real, singles.stated);

  rep.r_precision_candidates = n_candidates;
  rep.r_precision_top1 = r_precision(models, fake, split, n_candidates, seed);
  rep.real_r_precision_top1 = r_precision(models, real, split, n_candidates, seed);
  rep.n_images = split.size();
  rep.n_regions = singles.size();
  rep.config_hash = models.config.hash();
  rep.seed = seed;
  rep.split = std::string(data::to_string(split.split));
  return rep;
}

}  // namespace dtc::eval
