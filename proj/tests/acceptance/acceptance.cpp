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


#include <torch/torch.h>

#include <array>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <string>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "dtc/checkpoint.hpp"
#include "dtc/dataset.hpp"
#include "dtc/discriminator.hpp"
#include "dtc/evaluator.hpp"
#include "dtc/generator.hpp"
#include "dtc/losses.hpp"
#include "dtc/metrics.hpp"
#include "dtc/models.hpp"
#include "dtc/service.hpp"
#include "dtc/trainer.hpp"
#include "fixtures.hpp"
#include "grad_check.hpp"
#include "harness.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dtc;
using acceptance::Check;
using acceptance::fmt;

namespace {

const auto kF64 = torch::TensorOptions().dtype(torch::kFloat64);

torch::Tensor vec(std::vector<double> v) { return torch::tensor(v, kF64); }
double val(const torch::Tensor& t) { return t.item<double>(); }
bool near(double a, double b, double tol) { return std::abs(a - b) <= tol; }

#ifndef DTC_DEFAULT_ARTIFACTS
#define DTC_DEFAULT_ARTIFACTS "artifacts"
#endif

fs::path artifacts() { return acceptance::artifact_dir(DTC_DEFAULT_ARTIFACTS); }

data::SampleSet load_for(const Models& m, const data::DatasetManifest& manifest, data::Split split) {
  return data::load_split(manifest, split, m.vocab, m.config.resolution, static_cast<int>(m.config.max_tokens),
                          static_cast<int>(m.config.scene_max_tokens));
}

// ---------------------------------------------------------------------------

void loss_formulas(Check& c) {
  using namespace loss;
  const LossWeights w;
  const double tol = 1e-6;
  auto hinge_x = [](double r, double f) { return val(d_hinge_image(vec({r}), vec({f}))); };
  c.expect(near(hinge_x(2, -2), 0.0, tol), "L_X(2,-2) != 0");
  c.expect(near(hinge_x(0, 0), 2.0, tol), "L_X(0,0) != 2");
  c.expect(near(hinge_x(0.5, -0.25), 1.25, tol), "L_X(0.5,-0.25) != 1.25");

  auto hinge_r = [](double a, double b, double d) {
    return val(d_hinge_region(RegionScores::flat(vec({a})), RegionScores::flat(vec({b})),
                              RegionScores::flat(vec({d}))));
  };
  c.expect(near(hinge_r(2, -2, -2), 0.0, tol), "L_R(2,-2,-2) != 0");
  c.expect(near(hinge_r(0, 0, 0), 3.0, tol), "L_R(0,0,0) != 3");
  c.expect(near(hinge_r(1, -1, -3), 0.0, tol), "L_R(1,-1,-3) != 0");

  c.expect(near(val(d_total(vec({2}).squeeze(), vec({3}).squeeze(), w)), 3.2, tol), "L_D defaults != 3.2");
  LossWeights zero = w;
  zero.lambda_image = zero.lambda_region = 0;
  c.expect(near(val(d_total(vec({2}).squeeze(), vec({3}).squeeze(), zero)), 0.0, tol), "L_D zero weights != 0");
  LossWeights only_x = zero;
  only_x.lambda_image = 1;
  c.expect(near(val(d_total(vec({5}).squeeze(), vec({7}).squeeze(), only_x)), 5.0, tol), "L_D passthrough != 5");

  c.expect(near(val(g_adversarial(vec({1}), RegionScores::flat(vec({1})), w)), -1.1, tol), "L_G(1,1) != -1.1");
  c.expect(near(val(g_adversarial(vec({0, 0}), RegionScores::flat(vec({0})), w)), 0.0, tol), "L_G zeros != 0");
  const auto sx = vec({0.3, -1.2});
  const auto sr = vec({0.7, 2.0, -0.1});
  const double once = val(g_adversarial(sx, RegionScores::flat(sr), w));
  c.expect(near(val(g_adversarial(2 * sx, RegionScores::flat(2 * sr), w)), 2 * once, tol), "L_G not linear");

  // DAMSM against an explicit context-vector implementation.
  const DamsmConfig cfg;
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    torch::manual_seed(seed);
    const std::int64_t b = 4, l = 9, t = 6, d = 5;
    DamsmImageFeatures img{torch::randn({b, l, d}, kF64), torch::randn({b, d}, kF64)};
    DamsmTextFeatures txt{torch::randn({b, t, d}, kF64), torch::zeros({b, t}, torch::kBool),
                          torch::randn({b, d}, kF64)};
    std::vector<std::int64_t> lengths;
    for (std::int64_t i = 0; i < b; ++i) {
      lengths.push_back(2 + (i * 3) % (t - 1));
      txt.mask[i].slice(0, 0, lengths.back()) = true;
      txt.words[i].slice(0, lengths.back()).zero_();
    }
    const double ref = testing::reference_damsm_loss(img.local, img.global, txt.words, lengths, txt.sentence,
                                                     cfg.gamma1, cfg.gamma2, cfg.gamma3);
    worst = std::max(worst, std::abs(val(damsm_loss(img, txt, cfg)) - ref));
  }
  c.expect(worst <= tol, "DAMSM vs reference " + fmt(worst));
  {
    torch::manual_seed(9);
    DamsmImageFeatures one{torch::randn({1, 4, 3}, kF64), torch::randn({1, 3}, kF64)};
    DamsmTextFeatures txt{torch::randn({1, 2, 3}, kF64), torch::ones({1, 2}, torch::kBool), torch::randn({1, 3}, kF64)};
    c.expect(near(val(damsm_loss(one, txt, cfg)), 0.0, tol), "DAMSM singleton batch != 0");
    DamsmImageFeatures two{one.local.repeat({2, 1, 1}), one.global.repeat({2, 1})};
    DamsmTextFeatures txt2{txt.words.repeat({2, 1, 1}), txt.mask.repeat({2, 1}), txt.sentence.repeat({2, 1})};
    c.expect(near(val(damsm_loss(two, txt2, cfg)), 4 * std::log(2.0), tol), "DAMSM duplicate pair != 4 ln 2");
  }

  c.expect(near(val(mmrfm_loss(vec({1, 2}).view({1, 2}), torch::zeros({1, 2}, kF64))), 1.5, tol), "MMRFM != 1.5");
  const auto f = torch::randn({3, 4}, kF64);
  c.expect(val(mmrfm_loss(f, f.clone())) == 0.0, "MMRFM(f,f) != 0");

  const auto x = torch::zeros({1, 3, 4, 4}, kF64);
  const auto identity = [](const torch::Tensor& t) { return std::vector<torch::Tensor>{t}; };
  const auto rec = reconstruction_losses(x, x + 0.5, identity);
  c.expect(near(val(rec.pixel), 0.5, tol), "pixel loss != 0.5");
  c.expect(near(val(rec.perceptual), 0.5, tol), "identity perceptual != pixel");
  c.note("worst DAMSM deviation " + fmt(worst, 3));
}

void frechet(Check& c) {
  torch::manual_seed(31);
  const auto x = torch::randn({500, 6}, kF64) * torch::rand({6}, kF64) + torch::randn({6}, kF64);
  const double self = eval::frechet_feature_distance(x, x);
  c.expect(self <= 1e-6, "d(X,X) = " + fmt(self));

  // One-dimensional sets with exact moments: mu +- sigma.
  double worst_1d = 0.0;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int i = 0; i < 20; ++i) {
    const double ma = u(rng), mb = u(rng), sa = std::abs(u(rng)) + 0.1, sb = std::abs(u(rng)) + 0.1;
    const auto a = vec({ma - sa, ma + sa}).view({2, 1});
    const auto b = vec({mb - sb, mb + sb}).view({2, 1});
    // Population moments of a two-point set need the n-1 correction undone.
    const double sa_hat = sa * std::sqrt(2.0), sb_hat = sb * std::sqrt(2.0);
    const double expect = testing::frechet_1d(ma, sa_hat, mb, sb_hat);
    worst_1d = std::max(worst_1d, std::abs(eval::frechet_feature_distance(a, b) - expect));
  }
  c.expect(worst_1d <= 1e-6, "1-D closed form deviation " + fmt(worst_1d));

  double worst_sym = 0.0;
  for (int i = 0; i < 10; ++i) {
    const auto a = torch::randn({200, 5}, kF64);
    const auto b = torch::randn({150, 5}, kF64) * 1.7 + 0.3;
    worst_sym = std::max(worst_sym, std::abs(eval::frechet_feature_distance(a, b) -
                                             eval::frechet_feature_distance(b, a)));
  }
  c.expect(worst_sym <= 1e-8, "asymmetry " + fmt(worst_sym));
  c.note("self " + fmt(self, 2) + ", 1-D " + fmt(worst_1d, 2) + ", symmetry " + fmt(worst_sym, 2));
}

void gradients(Check& c) {
  torch::manual_seed(21);
  std::map<std::string, double> errors;

  {
    const std::int64_t ch = 3, d = 5, m = 2;
    const auto wg = torch::randn({d, ch}, kF64);
    const auto wb = torch::randn({d, ch}, kF64);
    const auto boxes = torch::tensor({{{0.0, 0.0, 0.75, 0.75}, {0.25, 0.5, 1.0, 1.0}}}, kF64);
    const auto masks = gen::place_masks(torch::rand({1, m, 4, 4}, kF64) * 0.8 + 0.1, boxes, 4, 4);
    const auto probe = torch::randn({1, ch, 4, 4}, kF64);
    auto f = [&](const std::vector<torch::Tensor>& in) {
      const auto out =
          gen::lats_modulate(in[0], torch::matmul(in[1], wg), torch::matmul(in[1], wb), masks, in[2], in[3]);
      return (out * probe).sum();
    };
    errors["lats_modulate"] = testing::gradient_error(
        f, {torch::randn({1, ch, 4, 4}, kF64), torch::randn({1, m, d}, kF64), torch::randn({ch}, kF64),
            torch::randn({ch}, kF64)});
  }
  {
    disc::DiscriminatorOptions o;
    o.image_size = 32;
    o.base_channels = 4;
    o.region_dim = 8;
    o.embed_dim = 6;
    disc::Discriminator d(o);
    d->to(torch::kFloat64);
    d->eval();
    auto f = [&](const std::vector<torch::Tensor>& in) { return d->region_score(in[0], in[1]).sum(); };
    errors["region_score"] =
        testing::gradient_error(f, {torch::randn({3, 8}, kF64), torch::randn({3, 6}, kF64)});
  }
  {
    const loss::DamsmConfig cfg;
    const auto mask = torch::tensor({{true, true, true}, {true, true, false}, {true, false, false}});
    auto f = [&](const std::vector<torch::Tensor>& in) {
      return loss::damsm_loss({in[0], in[1]}, {in[2] * mask.unsqueeze(-1), mask, in[3]}, cfg);
    };
    errors["damsm_loss"] = testing::gradient_error(
        f, {torch::randn({3, 16, 4}, kF64), torch::randn({3, 4}, kF64), torch::randn({3, 3, 4}, kF64),
            torch::randn({3, 4}, kF64)});
  }
  {
    // Offsets keep every difference away from the kink of |x|.
    const auto real = torch::randn({3, 6}, kF64);
    const auto offset = torch::where(torch::rand({3, 6}, kF64) < 0.5, -1.0, 1.0).to(torch::kFloat64) *
                        (0.1 + torch::rand({3, 6}, kF64));
    auto f = [&](const std::vector<torch::Tensor>& in) { return loss::mmrfm_loss(real, in[0]); };
    errors["mmrfm_loss"] = testing::gradient_error(f, {real + offset});
  }
  std::string summary;
  for (const auto& [name, err] : errors) {
    c.expect(err <= 1e-3, name + " relative error " + fmt(err));
    summary += (summary.empty() ? "" : ", ") + name + " " + fmt(err, 2);
  }
  c.note(summary);
}

void roi_equivalence(Check& c) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> size(2, 9);
  torch::manual_seed(17);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const int h = size(rng);
    const int w = size(rng);
    const int ch = 8;
    const int bins = 1 + trial % 5;
    disc::DiscriminatorOptions o;
    o.image_size = 32;
    o.base_channels = 1;  // eight backbone channels
    o.region_dim = 5;
    o.embed_dim = 3;
    o.roi_bins = bins;
    disc::Discriminator d(o);
    d->to(torch::kFloat64);
    d->eval();
    const auto fmap = torch::randn({2, ch, h, w}, kF64);
    const double bw = std::min(1.0, 1.0 / w + unit(rng) * (1.0 - 1.0 / w));
    const double bh = std::min(1.0, 1.0 / h + unit(rng) * (1.0 - 1.0 / h));
    const double x1 = unit(rng) * (1.0 - bw);
    const double y1 = unit(rng) * (1.0 - bh);
    const std::array<double, 4> box = {x1, y1, x1 + bw, y1 + bh};
    const std::int64_t b = trial % 2;
    const disc::RegionList regions{torch::tensor({{box[0], box[1], box[2], box[3]}}, kF64),
                                   torch::tensor({b}, torch::kInt64)};

    // Pooled grid against the oracle.
    const auto pooled = disc::roi_align(fmap, regions, bins).pooled[0];
    const auto rectified = torch::relu(fmap[b]);
    std::vector<torch::Tensor> oracle_bins;
    for (int k = 0; k < ch; ++k) {
      const auto ref = testing::brute_force_roi(fmap[b][k].contiguous(), box, bins);
      worst = std::max(worst, (pooled[k] - ref).abs().max().item<double>());
      oracle_bins.push_back(testing::brute_force_roi(rectified[k].contiguous(), box, bins).mean());
    }
    // Region features: projection of the oracle's bin average, read back
    // through a one-cell map covered by the full box.
    const auto cell = torch::stack(oracle_bins).view({1, ch, 1, 1});
    const disc::RegionList full{torch::tensor({{0.0, 0.0, 1.0, 1.0}}, kF64), torch::zeros({1}, torch::kInt64)};
    const auto got = d->extract_region_features(fmap, regions).features;
    const auto expect = d->extract_region_features(cell, full).features;
    worst = std::max(worst, (got - expect).abs().max().item<double>());
  }
  c.expect(worst <= 1e-5, "max abs diff " + fmt(worst));
  c.note("200 cases, max abs diff " + fmt(worst, 3));
}

void lats_invariants(Check& c) {
  torch::manual_seed(41);
  // Identity modulation.
  {
    const auto x = torch::randn({2, 5, 4, 4});
    const auto ones = torch::ones({2, 1, 5});
    const auto zeros = torch::zeros({2, 1, 5});
    const auto masks = torch::ones({2, 1, 4, 4});
    c.expect(torch::equal(gen::lats_modulate(x, ones, zeros, masks, torch::ones({5}), torch::zeros({5})), x),
             "gamma=1, beta=0 changes features");
    gen::LatsNorm norm(5, 6);
    norm->eval();
    {
      torch::NoGradGuard ng;
      norm->gamma_proj->weight.zero_();
      norm->gamma_proj->bias.fill_(1.0);
      norm->beta_proj->weight.zero_();
      norm->beta_proj->bias.zero_();
      norm->bg_gamma.fill_(1.0);
      norm->bg_beta.zero_();
    }
    torch::NoGradGuard ng;
    const auto partial = gen::place_masks(torch::rand({2, 1, 4, 4}), torch::tensor({0.1, 0.2, 0.6, 0.7}).repeat({2, 1, 1}), 4, 4);
    c.expect(torch::equal(norm->forward(x, torch::randn({2, 1, 6}), partial), norm->norm(x)),
             "LatsNorm with identity parameters differs from plain normalization");
  }
  // Background invariance under changes of S and of mask contents.
  {
    torch::NoGradGuard ng;
    gen::LatsNorm norm(4, 6);
    gen::MaskRegressor reg(6, 16, 4);
    norm->eval();
    int checked = 0;
    bool ok = true;
    for (int trial = 0; trial < 20; ++trial) {
      const auto xy = torch::rand({1, 2, 2}) * 0.5;
      const auto boxes = torch::cat({xy, xy + torch::rand({1, 2, 2}) * 0.4 + 0.05}, -1);
      const auto valid = torch::ones({1, 2}, torch::kBool);
      const auto x = torch::randn({1, 4, 16, 16});
      const auto outside = gen::box_footprint(boxes, 16, 16).sum(1)[0] == 0;
      if (outside.sum().item<int>() == 0) continue;
      const auto s1 = torch::randn({1, 2, 6});
      const auto s2 = torch::randn({1, 2, 6}) * 3;
      const auto y1 = norm->forward(x, s1, gen::predict_masks(reg, s1, boxes, valid, 16, 16));
      const auto y2 = norm->forward(x, s2, gen::place_masks(torch::rand({1, 2, 5, 5}), boxes, 16, 16));
      for (int ch = 0; ch < 4; ++ch) {
        ok = ok && torch::equal(y1[0][ch].masked_select(outside), y2[0][ch].masked_select(outside));
        const auto expect = norm->norm(x)[0][ch] * norm->bg_gamma[ch] + norm->bg_beta[ch];
        ok = ok && torch::equal(y1[0][ch].masked_select(outside), expect.masked_select(outside));
      }
      ++checked;
    }
    c.expect(ok && checked > 0, "background pixels depend on S or mask contents");
  }
  // Mask locality at every generator resolution.
  {
    torch::NoGradGuard ng;
    gen::MaskRegressor reg(12, 16, 8);
    bool ok = true;
    for (int trial = 0; trial < 50; ++trial) {
      const auto xy = torch::rand({2, 3, 2});
      const auto wh = torch::rand({2, 3, 2}) * 0.5 + 0.05;
      const auto boxes = torch::cat({xy * 0.5, (xy * 0.5 + wh).clamp_max(1.0)}, -1);
      const auto valid = torch::tensor({{true, true, false}, {true, false, false}});
      const auto s = torch::randn({2, 3, 12});
      for (std::int64_t res : {4, 8, 16, 32, 64, 128}) {
        const auto m = gen::predict_masks(reg, s, boxes, valid, res, res);
        const auto foot = gen::box_footprint(boxes, res, res) * valid.unsqueeze(-1).unsqueeze(-1);
        ok = ok && (m.masked_select(foot == 0) == 0).all().item<bool>() && (m >= 0).all().item<bool>() &&
             (m <= 1).all().item<bool>();
      }
    }
    c.expect(ok, "mask support leaves the box footprint");
  }
  c.note("identity, background and locality checks exact");
}

std::map<std::string, std::string> tree_bytes(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).generic_string()] = testing::slurp(e.path());
  }
  return out;
}

void dataset_determinism(Check& c) {
  testing::TempDir a("accept_a");
  testing::TempDir b("accept_b");
  data::build_dataset(200, a.path(), 11);
  data::build_dataset(200, b.path(), 11);
  const auto ta = tree_bytes(a.path());
  const auto tb = tree_bytes(b.path());
  c.expect(ta.size() > 200, "expected at least 200 files, got " + std::to_string(ta.size()));
  c.expect(ta == tb, "trees differ");
  testing::TempDir other("accept_c");
  data::build_dataset(200, other.path(), 12);
  c.expect(tree_bytes(other.path()) != ta, "a different seed gave the same dataset");
  c.note(std::to_string(ta.size()) + " files byte-identical");
}

void damsm_retrieval(Check& c) {
  const auto ckpt_path = artifacts() / "damsm.ckpt";
  const auto data_root = artifacts() / "data";
  if (!fs::exists(ckpt_path) || !fs::exists(data_root / "dataset.json")) {
    c.expect(false, "missing " + ckpt_path.string() + " or dataset; run scripts/desk_pipeline.sh");
    return;
  }
  auto models = Models::from_checkpoint(ckpt::load_checkpoint(ckpt_path));
  const auto manifest = data::load_dataset(data_root);
  c.expect(manifest.total_records() == 10000, "dataset has " + std::to_string(manifest.total_records()) + " images");
  const auto test = load_for(models, manifest, data::Split::test);
  const double top1 = eval::damsm_retrieval_top1(models, test, 20, 0);
  c.expect(top1 >= 0.25, "top-1 of 20 = " + fmt(top1) + " < 0.25");
  c.note("held-out top-1 of 20 = " + fmt(top1));
}

void desk_training(Check& c) {
  const auto ckpt_path = artifacts() / "gan.ckpt";
  const auto data_root = artifacts() / "data";
  if (!fs::exists(ckpt_path) || !fs::exists(data_root / "dataset.json")) {
    c.expect(false, "missing " + ckpt_path.string() + " or dataset; run scripts/desk_pipeline.sh");
    return;
  }
  auto models = Models::from_checkpoint(ckpt::load_checkpoint(ckpt_path));
  const auto manifest = data::load_dataset(data_root);
  const auto test = load_for(models, manifest, data::Split::test);
  const auto r = eval::evaluate(models, test, 0, 10);
  const auto& gen = r.attr_accuracy;
  const auto& real = r.real_attr_accuracy;
  c.expect(gen.color >= 0.70, "(a) color " + fmt(gen.color) + " < 0.70");
  c.expect(real.color - gen.color <= 0.25, "(a) color gap " + fmt(real.color - gen.color) + " > 0.25");
  c.expect(gen.shape >= 0.55, "(b) shape " + fmt(gen.shape) + " < 0.55");
  c.expect(r.frechet_image <= r.frechet_noise / 10,
           "(c) frechet " + fmt(r.frechet_image) + " > noise/10 = " + fmt(r.frechet_noise / 10));
  c.expect(r.r_precision_top1 >= 0.30, "(d) r-precision " + fmt(r.r_precision_top1) + " < 0.30");
  c.note("color " + fmt(gen.color) + " (real " + fmt(real.color) + "), shape " + fmt(gen.shape) + ", frechet " +
         fmt(r.frechet_image) + " vs noise " + fmt(r.frechet_noise) + ", r-precision " + fmt(r.r_precision_top1));
}

using Trace = std::map<std::int64_t, std::map<std::string, double>>;

train::RunOptions recording(Trace& trace) {
  train::RunOptions run;
  run.on_step = [&trace](const train::StepLog& log) { trace[log.step] = log.values; };
  return run;
}

void checkpoint_resume(Check& c) {
  const auto& corpus = testing::tiny_corpus();
  testing::TempDir dir("accept_ckpt");

  // Save -> load forward equality.
  auto models = Models::create(corpus.config, corpus.vocab);
  ckpt::save_checkpoint(dir / "m.ckpt", models.to_checkpoint(0, 0));
  auto loaded = Models::from_checkpoint(ckpt::load_checkpoint(dir / "m.ckpt"));
  const auto batch = data::make_batch(corpus.train, std::vector<std::int64_t>{0, 1, 2}, 6, 9);
  auto forward = [&](Models& m) {
    m.generator->eval();
    m.discriminator->eval();
    m.text->eval();
    m.image_encoder->eval();
    torch::NoGradGuard ng;
    const auto enc = encode_tokens(m.text, disc::flatten_valid(batch.token_ids, batch.valid),
                                   disc::flatten_valid(batch.lengths, batch.valid));
    const auto e = scatter_regions(enc.sentence, batch.valid);
    const auto z = gen::seeded_normal({3, batch.valid.size(1), m.config.z_region_dim}, 4);
    const auto img = m.generator->forward(gen::seeded_normal({3, m.config.z_img_dim}, 3),
                                          gen::embedding_matrix(e, z).s, batch.boxes, batch.valid);
    const auto d = m.discriminator->forward(img, disc::flatten_regions(batch.boxes, batch.valid), enc.sentence);
    const auto feats = m.image_encoder->forward(batch.images);
    return std::vector<torch::Tensor>{enc.words, enc.sentence, img, d.image_score, d.region_scores,
                                      d.multimodal, feats.local, feats.global};
  };
  const auto a = forward(models);
  const auto b = forward(loaded);
  bool equal = a.size() == b.size();
  for (std::size_t i = 0; equal && i < a.size(); ++i) equal = torch::equal(a[i], b[i]);
  c.expect(equal, "forward outputs differ after save/load");

  // Interrupted vs straight GAN run.
  auto cfg = corpus.config;
  cfg.max_steps = 4;
  Trace straight, resumed;
  auto m1 = Models::create(cfg, corpus.vocab);
  train::train_gan(m1, corpus.train, recording(straight));
  auto m2 = Models::create(cfg, corpus.vocab);
  train::RunOptions first;
  first.checkpoint_path = dir / "g.ckpt";
  first.stop_after = 2;
  train::train_gan(m2, corpus.train, first);
  auto m3 = Models::create(cfg, corpus.vocab);
  auto second = recording(resumed);
  second.resume = dir / "g.ckpt";
  train::train_gan(m3, corpus.train, second);
  c.expect(resumed.count(3) == 1 && resumed.at(3) == straight.at(3), "GAN step 3 losses differ after resume");
  c.expect(resumed.count(4) == 1 && resumed.at(4) == straight.at(4), "GAN step 4 losses differ after resume");
  c.expect(parameter_hash(*m3.generator) == parameter_hash(*m1.generator), "generator weights differ");
  c.expect(parameter_hash(*m3.discriminator) == parameter_hash(*m1.discriminator), "discriminator weights differ");

  // Interrupted vs straight DAMSM run.
  Trace d_straight, d_resumed;
  auto cfg_d = corpus.config;
  cfg_d.max_steps = 4;
  auto d1 = Models::create(cfg_d, corpus.vocab);
  train::pretrain_damsm(d1, corpus.train, recording(d_straight));
  auto d2 = Models::create(cfg_d, corpus.vocab);
  train::RunOptions d_first;
  d_first.checkpoint_path = dir / "d.ckpt";
  d_first.stop_after = 2;
  train::pretrain_damsm(d2, corpus.train, d_first);
  auto d3 = Models::create(cfg_d, corpus.vocab);
  auto d_second = recording(d_resumed);
  d_second.resume = dir / "d.ckpt";
  train::pretrain_damsm(d3, corpus.train, d_second);
  c.expect(d_resumed.count(3) == 1 && d_resumed.at(3) == d_straight.at(3), "DAMSM step 3 loss differs after resume");
  c.note("forward outputs bit-exact; resumed GAN and DAMSM steps match");
}

std::string reason_of(const service::HttpResponse& r) {
  return json::parse(r.body).at("error").at("reason").get<std::string>();
}

void service_contract(Check& c) {
  const auto& corpus = testing::tiny_corpus();
  service::InferenceService svc(Models::create(corpus.config, corpus.vocab));
  const json body = {{"global_seed", 5},
                     {"regions",
                      {{{"box", {0.1, 0.1, 0.6, 0.5}}, {"caption", "a small red circle"}, {"region_seed", 3}},
                       {{"box", {0.4, 0.4, 0.9, 0.9}}, {"caption", "a large blue square"}, {"region_seed", 4}}}}};
  const auto r1 = svc.handle_generate(body.dump());
  const auto r2 = svc.handle_generate(body.dump());
  c.expect(r1.status == 200 && r2.status == 200, "valid request rejected");
  if (r1.status == 200 && r2.status == 200) {
    c.expect(json::parse(r1.body).at("image") == json::parse(r2.body).at("image"), "PNG bytes differ");
    service::GenerateRequest req = std::get<service::GenerateRequest>(service::parse_generate_request(body.dump(), 6));
    const auto png1 = svc.generate(req).png;
    const auto img = data::decode_png(svc.generate(req).png);
    c.expect(png1 == svc.generate(req).png, "direct PNG bytes differ");
    c.expect(img.width == corpus.config.resolution && img.height == corpus.config.resolution, "PNG size");
  }

  const std::vector<std::pair<std::string, std::string>> invalid = {
      {"{not json", "malformed_json"},
      {"[1, 2]", "not_an_object"},
      {R"({"regions": []})", "no_regions"},
      {R"({"regions": [7]})", "region_not_object"},
      {R"({"regions": [{"box": [0,0,1], "caption": "x"}]})", "box_arity"},
      {R"({"regions": [{"box": [0,0,"1",1], "caption": "x"}]})", "box_not_number"},
      {R"({"regions": [{"box": [0.5,0.5,0.4,0.9], "caption": "x"}]})", "box_x_order"},
      {R"({"regions": [{"box": [0.1,0.5,0.4,0.5], "caption": "x"}]})", "box_y_order"},
      {R"({"regions": [{"box": [-0.1,0,0.4,0.5], "caption": "x"}]})", "box_out_of_range"},
      {R"({"regions": [{"box": [0,0,1,1]}]})", "caption_missing"},
      {R"({"regions": [{"box": [0,0,1,1], "caption": "  "}]})", "caption_empty"},
      {R"({"global_seed": -3, "regions": [{"box": [0,0,1,1], "caption": "x"}]})", "bad_seed"},
  };
  std::set<std::string> reasons;
  for (const auto& [request, reason] : invalid) {
    const auto r = svc.handle_generate(request);
    const bool ok = r.status == 400 && reason_of(r) == reason;
    c.expect(ok, "expected 400 " + reason + " for " + request);
    reasons.insert(reason);
  }
  json many = {{"regions", json::array()}};
  for (int i = 0; i < 7; ++i) many["regions"].push_back({{"box", {0, 0, 1, 1}}, {"caption", "a red circle"}});
  const auto too_many = svc.handle_generate(many.dump());
  c.expect(too_many.status == 400 && reason_of(too_many) == "too_many_regions", "too_many_regions");
  reasons.insert("too_many_regions");
  c.expect(reasons.size() == invalid.size() + 1, "reasons are not distinct");

  // Over HTTP.
  service::HttpServer server(svc);
  const int port = server.start("127.0.0.1", 0);
  httplib::Client cli("127.0.0.1", port);
  cli.set_read_timeout(60, 0);
  const auto health = cli.Get("/health");
  c.expect(health && health->status == 200 && health->body == "ok", "/health");
  const auto meta = cli.Get("/meta");
  c.expect(meta && meta->status == 200, "/meta status");
  if (meta && meta->status == 200) {
    const auto j = json::parse(meta->body);
    for (const char* key : {"resolution", "max_regions", "vocabulary", "vocab_size", "model_hash"}) {
      c.expect(j.contains(key), std::string("/meta lacks ") + key);
    }
    c.expect(j.value("resolution", 0) == corpus.config.resolution, "/meta resolution");
    c.expect(j.value("max_regions", 0) == corpus.config.max_regions, "/meta max_regions");
    c.expect(j.value("model_hash", std::string()) == svc.model_hash(), "/meta model_hash");
  }
  const auto p1 = cli.Post("/generate", body.dump(), "application/json");
  const auto p2 = cli.Post("/generate", body.dump(), "application/json");
  c.expect(p1 && p2 && p1->status == 200 && json::parse(p1->body).at("image") == json::parse(p2->body).at("image"),
           "HTTP generate not reproducible");
  const auto bad = cli.Post("/generate", invalid[6].first, "application/json");
  c.expect(bad && bad->status == 400 && json::parse(bad->body).at("error").at("reason") == "box_x_order",
           "HTTP 400 reason");
  server.stop();
  c.note(std::to_string(reasons.size()) + " distinct 400 reasons; identical PNG bytes; /health and /meta ok");
}

}  // namespace

int main(int argc, char** argv) {
  torch::set_num_threads(1);
  const std::vector<acceptance::Criterion> criteria = {
      {"loss_formulas", loss_formulas},
      {"frechet", frechet},
      {"gradients", gradients},
      {"roi_equivalence", roi_equivalence},
      {"lats_invariants", lats_invariants},
      {"dataset_determinism", dataset_determinism},
      {"damsm_retrieval", damsm_retrieval},
      {"desk_training", desk_training},
      {"checkpoint_resume", checkpoint_resume},
      {"service", service_contract},
  };
  return acceptance::main_with(criteria, argc, argv);
}
