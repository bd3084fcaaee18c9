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

#include "dtc/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "dtc/losses.hpp"

namespace dtc::train {

namespace F = torch::nn::functional;

namespace {

// Independent random streams derived from the run seed.
enum Stream : std::uint64_t {
  kOracleOrder = 11,
  kOracleJitter,
  kDamsmOrder,
  kDamsmRegions,
  kGanOrder,
  kGanRegions,
  kGanLatents,
  kGanMismatch,
};

constexpr const char* kPhaseDamsm = "damsm";
constexpr const char* kPhaseGan = "gan";
constexpr double kEmaDecay = 0.999;

std::uint64_t stream_seed(const TrainConfig& cfg, Stream s, std::uint64_t index) {
  return scene::derive_seed(scene::derive_seed(cfg.seed, s), index);
}

torch::optim::Adam make_adam(std::vector<torch::Tensor> params, double lr, const TrainConfig& cfg) {
  return torch::optim::Adam(std::move(params), torch::optim::AdamOptions(lr).betas({cfg.beta1, cfg.beta2}));
}

std::vector<torch::Tensor> concat_params(std::initializer_list<const torch::nn::Module*> modules) {
  std::vector<torch::Tensor> out;
  for (const auto* m : modules) {
    auto p = m->parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

void check_finite(const std::string& term, const torch::Tensor& value, std::int64_t step) {
  if (!std::isfinite(value.item<double>())) throw NonFiniteLoss(term, step);
}

ckpt::Checkpoint load_resume(const std::filesystem::path& path, const Models& models, const char* phase) {
  auto c = ckpt::load_checkpoint(path);
  if (c.config_hash != models.config.hash()) {
    throw ConfigMismatch("resume: checkpoint config hash " + hex64(c.config_hash) + " differs from current " +
                         hex64(models.config.hash()));
  }
  if (c.meta.value("phase", "") != phase) {
    throw std::runtime_error(std::string("resume: checkpoint is not from the ") + phase + " phase");
  }
  return c;
}

disc::RegionList whole_image_regions(std::int64_t n) {
  return {torch::tensor({0.0f, 0.0f, 1.0f, 1.0f}).repeat({n, 1}), torch::arange(n, torch::kInt64)};
}

struct Schedule {
  std::int64_t per_epoch = 0;
  std::int64_t total = 0;
};

Schedule make_schedule(std::int64_t samples, const TrainConfig& cfg, std::int64_t epochs) {
  Schedule s;
  s.per_epoch = steps_per_epoch(samples, cfg.batch_size);
  s.total = s.per_epoch * epochs;
  if (cfg.max_steps > 0) s.total = std::min(s.total, cfg.max_steps);
  return s;
}

/// Sample indices of one step; the epoch order depends only on (seed, epoch).
class BatchPlan {
 public:
  BatchPlan(std::int64_t samples, std::int64_t batch_size, std::uint64_t seed)
      : samples_(samples), batch_size_(batch_size), seed_(seed) {}

  std::vector<std::int64_t> indices(std::int64_t step) {
    const auto per_epoch = steps_per_epoch(samples_, batch_size_);
    const auto epoch = step / per_epoch;
    if (epoch != epoch_) {
      order_ = data::epoch_order(samples_, seed_, epoch);
      epoch_ = epoch;
    }
    const auto begin = order_.begin() + (step % per_epoch) * batch_size_;
    return {begin, begin + batch_size_};
  }

 private:
  std::int64_t samples_;
  std::int64_t batch_size_;
  std::uint64_t seed_;
  std::int64_t epoch_ = -1;
  std::vector<std::int64_t> order_;
};

void emit(const RunOptions& run, const char* phase, std::int64_t step, std::int64_t epoch,
          const std::map<std::string, double>& values) {
  if (run.on_step) run.on_step(StepLog{phase, step, epoch, values});
}

}  // namespace

NonFiniteLoss::NonFiniteLoss(const std::string& term, std::int64_t step)
    : std::runtime_error("non-finite loss term " + term + " at step " + std::to_string(step)), term_(term) {}

std::int64_t steps_per_epoch(std::int64_t samples, std::int64_t batch_size) {
  if (batch_size < 2) throw std::invalid_argument("batch size must be >= 2");
  if (samples < batch_size) throw std::invalid_argument("fewer samples than one batch");
  return samples / batch_size;
}

eval::AttributeAccuracy train_oracle(Models& models, const data::SampleSet& train, const data::SampleSet& val,
                                     const std::function<void(const StepLog&)>& on_step) {
  const auto& cfg = models.config;
  auto& oracle = models.oracle;
  const auto opts = oracle->options();
  const auto singles = eval::collect_singletons(train);
  if (singles.size() < 2) throw std::invalid_argument("train_oracle: no single-object regions in the training split");
  set_trainable(*oracle, true);
  oracle->train();
  auto opt = make_adam(oracle->parameters(), cfg.lr_oracle, cfg);
  constexpr std::int64_t kBatch = 64;
  constexpr double kJitter = 0.02;
  const auto n = singles.size();
  const auto per_epoch = std::max<std::int64_t>(1, n / kBatch);
  std::int64_t step = 0;
  for (std::int64_t epoch = 0; epoch < cfg.oracle_epochs; ++epoch) {
    const auto order = data::epoch_order(n, scene::derive_seed(cfg.seed, kOracleOrder), epoch);
    for (std::int64_t i = 0; i < per_epoch; ++i, ++step) {
      const auto count = std::min<std::int64_t>(kBatch, n - i * kBatch);
      const auto idx = torch::tensor(std::vector<std::int64_t>(order.begin() + i * kBatch, order.begin() + i * kBatch + count));
      std::vector<std::int64_t> images;
      for (auto k : std::vector<std::int64_t>(order.begin() + i * kBatch, order.begin() + i * kBatch + count)) {
        images.push_back(singles.image_index[static_cast<std::size_t>(k)]);
      }
      const auto x = data::images_at(train, images);
      auto gen = at::make_generator<at::CPUGeneratorImpl>(stream_seed(cfg, kOracleJitter, static_cast<std::uint64_t>(step)));
      const auto shift = (at::rand({count, 2}, gen) * 2 - 1) * kJitter;
      const auto boxes = singles.boxes.index_select(0, idx) + torch::cat({shift, shift}, 1);
      const auto crops = eval::oracle_crops(x, {boxes, torch::arange(count, torch::kInt64)}, opts);
      const auto out = oracle->forward(crops);
      const auto loss = F::cross_entropy(out.color, singles.truth.color.index_select(0, idx)) +
                        F::cross_entropy(out.shape, singles.truth.shape.index_select(0, idx)) +
                        F::cross_entropy(out.size, singles.truth.size.index_select(0, idx)) +
                        F::cross_entropy(out.texture, singles.truth.texture.index_select(0, idx));
      check_finite("oracle", loss, step);
      opt.zero_grad();
      loss.backward();
      opt.step();
      if (on_step) on_step(StepLog{"oracle", step + 1, epoch, {{"loss", loss.item<double>()}}});
    }
  }
  oracle->eval();
  set_trainable(*oracle, false);

  torch::NoGradGuard no_grad;
  const auto vs = eval::collect_singletons(val);
  if (vs.size() == 0) throw std::invalid_argument("train_oracle: no single-object regions in the validation split");
  const auto x = data::images_at(val, vs.image_index);
  const auto crops = eval::oracle_crops(x, {vs.boxes, torch::arange(vs.size(), torch::kInt64)}, opts);
  return eval::score_attributes(oracle->forward(crops), vs.truth);
}

torch::Tensor damsm_batch_loss(Models& models, const data::Batch& batch) {
  const auto& cfg = models.config;
  const auto regions = disc::flatten_regions(batch.boxes, batch.valid);
  const auto crops = damsm::crop_regions(batch.images, regions, cfg.damsm_crop);
  const auto image = models.image_encoder->forward(crops);
  const auto text = models.text->forward(disc::flatten_valid(batch.token_ids, batch.valid),
                                         disc::flatten_valid(batch.lengths, batch.valid));
  auto loss = loss::damsm_loss(image, {text.words, text.mask, text.sentence}, cfg.damsm);
  if (cfg.damsm_scene_pairs) {
    const auto n = batch.images.size(0);
    const auto whole = damsm::crop_regions(batch.images, whole_image_regions(n), cfg.damsm_crop);
    const auto scene_image = models.image_encoder->forward(whole);
    const auto scene_text = models.text->forward(batch.scene_ids, batch.scene_lengths);
    loss = loss + loss::damsm_loss(scene_image, {scene_text.words, scene_text.mask, scene_text.sentence}, cfg.damsm);
  }
  return loss;
}

PhaseResult pretrain_damsm(Models& models, const data::SampleSet& train, const RunOptions& run) {
  const auto& cfg = models.config;
  const auto sched = make_schedule(train.size(), cfg, cfg.damsm_epochs);
  set_trainable(*models.text, true);
  set_trainable(*models.image_encoder, true);
  models.text->train();
  models.image_encoder->train();
  auto opt = make_adam(concat_params({models.text.get(), models.image_encoder.get()}), cfg.lr_damsm, cfg);

  std::int64_t start = 0;
  if (run.resume) {
    const auto c = load_resume(*run.resume, models, kPhaseDamsm);
    models.load_available(c);
    ckpt::restore_adam(c, "adam_damsm.text.", *models.text, opt);
    ckpt::restore_adam(c, "adam_damsm.img_enc.", *models.image_encoder, opt);
    start = c.step;
  }

  auto save = [&](std::int64_t step) {
    if (run.checkpoint_path.empty()) return;
    auto c = models.to_checkpoint(step, step / sched.per_epoch);
    c.meta["phase"] = kPhaseDamsm;
    ckpt::store_adam(c, "adam_damsm.text.", *models.text, opt);
    ckpt::store_adam(c, "adam_damsm.img_enc.", *models.image_encoder, opt);
    ckpt::save_checkpoint(run.checkpoint_path, c);
  };

  BatchPlan plan(train.size(), cfg.batch_size, scene::derive_seed(cfg.seed, kDamsmOrder));
  PhaseResult result;
  std::int64_t step = start;
  while (step < sched.total) {
    const auto batch = data::make_batch(train, plan.indices(step), cfg.max_regions,
                                        stream_seed(cfg, kDamsmRegions, static_cast<std::uint64_t>(step)));
    const auto loss = damsm_batch_loss(models, batch);
    check_finite("damsm", loss, step);
    opt.zero_grad();
    loss.backward();
    opt.step();
    ++step;
    result.last = {{"damsm", loss.item<double>()}};
    emit(run, kPhaseDamsm, step, (step - 1) / sched.per_epoch, result.last);
    if (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0) save(step);
    if (run.stop_after > 0 && step >= run.stop_after) break;
  }
  save(step);
  models.text->eval();
  models.image_encoder->eval();
  set_trainable(*models.text, false);
  set_trainable(*models.image_encoder, false);
  result.steps = step;
  result.epochs_completed = step / sched.per_epoch;
  return result;
}

PhaseResult train_gan(Models& models, const data::SampleSet& train, const RunOptions& run) {
  const auto& cfg = models.config;
  const auto& w = cfg.weights;
  const auto sched = make_schedule(train.size(), cfg, cfg.epochs);
  auto& G = models.generator;
  auto& D = models.discriminator;

  // Frozen encoders.
  for (torch::nn::Module* m : {static_cast<torch::nn::Module*>(models.text.get()),
                               static_cast<torch::nn::Module*>(models.image_encoder.get()),
                               static_cast<torch::nn::Module*>(models.oracle.get())}) {
    m->eval();
    set_trainable(*m, false);
  }
  G->train();
  D->train();
  set_trainable(*G, true);
  set_trainable(*D, true);
  auto opt_g = make_adam(G->parameters(), cfg.lr_g, cfg);
  auto opt_d = make_adam(D->parameters(), cfg.lr_d, cfg);

  std::int64_t start = 0;
  if (run.resume) {
    const auto c = load_resume(*run.resume, models, kPhaseGan);
    models.load_available(c);
    ckpt::restore_adam(c, "adam_g.", *G, opt_g);
    ckpt::restore_adam(c, "adam_d.", *D, opt_d);
    start = c.step;
  }

  auto save = [&](std::int64_t step) {
    if (run.checkpoint_path.empty()) return;
    auto c = models.to_checkpoint(step, step / sched.per_epoch);
    c.meta["phase"] = kPhaseGan;
    ckpt::store_adam(c, "adam_g.", *G, opt_g);
    ckpt::store_adam(c, "adam_d.", *D, opt_d);
    ckpt::save_checkpoint(run.checkpoint_path, c);
  };

  const auto gopts = G->options();
  const loss::FeatureExtractor perceptual = [&](const torch::Tensor& x) {
    return models.oracle->perceptual_features(x);
  };

  BatchPlan plan(train.size(), cfg.batch_size, scene::derive_seed(cfg.seed, kGanOrder));
  PhaseResult result;
  std::int64_t step = start;
  while (step < sched.total) {
    const auto batch = data::make_batch(train, plan.indices(step), cfg.max_regions,
                                        stream_seed(cfg, kGanRegions, static_cast<std::uint64_t>(step)));
    const auto n = batch.images.size(0);
    const auto m = batch.valid.size(1);
    const auto regions = disc::flatten_regions(batch.boxes, batch.valid);
    const auto r = regions.boxes.size(0);
    const auto captions = batch.flat_captions();

    text::TextEncoding words;
    {
      torch::NoGradGuard no_grad;
      words = models.text->forward(disc::flatten_valid(batch.token_ids, batch.valid),
                                   disc::flatten_valid(batch.lengths, batch.valid));
    }
    const auto e_flat = words.sentence;
    const auto e_full = scatter_regions(e_flat, batch.valid);
    const auto latent_seed = stream_seed(cfg, kGanLatents, static_cast<std::uint64_t>(step));
    const auto z_img = gen::seeded_normal({n, gopts.z_img_dim}, scene::derive_seed(latent_seed, 0));
    const auto z_reg = gen::seeded_normal({n, m, gopts.z_region_dim}, scene::derive_seed(latent_seed, 1));
    const auto s = gen::embedding_matrix(e_full, z_reg).s;
    const auto fake = G->forward(z_img, s, batch.boxes, batch.valid);

    // Discriminator update.
    set_trainable(*D, true);
    opt_d.zero_grad();
    const auto real_out = D->forward(batch.images, regions, e_flat);
    const auto fake_out = D->forward(fake.detach(), regions, e_flat);
    const auto perm = data::derangement(r < 2 ? 2 : r, stream_seed(cfg, kGanMismatch, static_cast<std::uint64_t>(step)));
    std::vector<std::int64_t> mis_index(static_cast<std::size_t>(r));
    std::vector<std::uint8_t> mis_keep(static_cast<std::size_t>(r));
    for (std::int64_t i = 0; i < r; ++i) {
      const auto j = r < 2 ? i : perm[static_cast<std::size_t>(i)];
      mis_index[static_cast<std::size_t>(i)] = j;
      mis_keep[static_cast<std::size_t>(i)] = captions[static_cast<std::size_t>(i)] != captions[static_cast<std::size_t>(j)];
    }
    const auto mis_scores = D->region_score(real_out.region_features, e_flat.index_select(0, torch::tensor(mis_index)));
    auto mismatch = loss::RegionScores::scatter(mis_scores, batch.valid);
    mismatch.valid = torch::zeros_like(batch.valid).masked_scatter(batch.valid, torch::tensor(mis_keep).to(torch::kBool));
    const auto l_x = loss::d_hinge_image(real_out.image_score, fake_out.image_score);
    const auto l_r = loss::d_hinge_region(loss::RegionScores::scatter(real_out.region_scores, batch.valid),
                                          loss::RegionScores::scatter(fake_out.region_scores, batch.valid), mismatch);
    const auto l_d = loss::d_total(l_x, l_r, w);
    check_finite("L_X", l_x, step);
    check_finite("L_R", l_r, step);
    check_finite("L_D", l_d, step);
    l_d.backward();
    opt_d.step();

    // Generator update.
    set_trainable(*D, false);
    opt_g.zero_grad();
    const auto g_out = D->forward(fake, regions, e_flat);
    const auto zero = torch::zeros({});
    const auto g_adv = loss::g_adversarial(g_out.image_score, loss::RegionScores::scatter(g_out.region_scores, batch.valid), w);
    auto l_damsm = zero;
    if (w.damsm > 0) {
      if (cfg.damsm_on_regions) {
        const auto crops = damsm::crop_regions(fake, regions, cfg.damsm_crop);
        l_damsm = loss::damsm_loss(models.image_encoder->forward(crops), {words.words, words.mask, words.sentence},
                                   cfg.damsm);
      } else {
        text::TextEncoding scene_words;
        {
          torch::NoGradGuard no_grad;
          scene_words = models.text->forward(batch.scene_ids, batch.scene_lengths);
        }
        const auto whole = damsm::crop_regions(fake, whole_image_regions(n), cfg.damsm_crop);
        l_damsm = loss::damsm_loss(models.image_encoder->forward(whole),
                                   {scene_words.words, scene_words.mask, scene_words.sentence}, cfg.damsm);
      }
    }
    const auto l_mmrfm = w.mmrfm > 0 ? loss::mmrfm_loss(real_out.multimodal.detach(), g_out.multimodal) : zero;
    loss::ReconstructionLosses recon{zero, zero};
    if (w.perceptual > 0 || w.pixel > 0) recon = loss::reconstruction_losses(batch.images, fake, perceptual);
    const auto l_g = g_adv + w.damsm * l_damsm + w.mmrfm * l_mmrfm + w.perceptual * recon.perceptual +
                     w.pixel * recon.pixel;
    check_finite("g_adversarial", g_adv, step);
    check_finite("damsm", l_damsm, step);
    check_finite("mmrfm", l_mmrfm, step);
    check_finite("perceptual", recon.perceptual, step);
    check_finite("pixel", recon.pixel, step);
    check_finite("L_G", l_g, step);
    l_g.backward();
    opt_g.step();

    if (models.generator_ema) {
      torch::NoGradGuard no_grad;
      auto src = G->parameters();
      auto dst = models.generator_ema->parameters();
      for (std::size_t i = 0; i < src.size(); ++i) dst[i].mul_(kEmaDecay).add_(src[i], 1.0 - kEmaDecay);
      auto sb = G->buffers();
      auto db = models.generator_ema->buffers();
      for (std::size_t i = 0; i < sb.size(); ++i) db[i].copy_(sb[i]);
    }

    ++step;
    result.last = {{"L_D", l_d.item<double>()},
                   {"L_X", l_x.item<double>()},
                   {"L_R", l_r.item<double>()},
                   {"L_G", l_g.item<double>()},
                   {"g_adversarial", g_adv.item<double>()},
                   {"damsm", l_damsm.item<double>()},
                   {"mmrfm", l_mmrfm.item<double>()},
                   {"perceptual", recon.perceptual.item<double>()},
                   {"pixel", recon.pixel.item<double>()}};
    emit(run, kPhaseGan, step, (step - 1) / sched.per_epoch, result.last);
    if (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0) save(step);
    if (run.stop_after > 0 && step >= run.stop_after) break;
  }
  save(step);
  set_trainable(*D, true);
  G->eval();
  result.steps = step;
  result.epochs_completed = step / sched.per_epoch;
  return result;
}

}  // namespace dtc::train
