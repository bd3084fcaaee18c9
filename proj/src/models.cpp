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

#include "dtc/models.hpp"

#include <stdexcept>

#include "dtc/scene.hpp"

namespace dtc {

namespace {

constexpr const char* kText = "text.";
constexpr const char* kImageEncoder = "img_enc.";
constexpr const char* kGenerator = "gen.";
constexpr const char* kDiscriminator = "disc.";
constexpr const char* kOracle = "oracle.";
constexpr const char* kGeneratorEma = "gen_ema.";

enum InitStream : std::uint64_t { kInitText = 101, kInitImage, kInitGen, kInitDisc, kInitOracle };

void seed_init(const TrainConfig& cfg, InitStream stream) {
  torch::manual_seed(scene::derive_seed(cfg.seed, stream));
}

}  // namespace

gen::GeneratorOptions generator_options(const TrainConfig& cfg) {
  gen::GeneratorOptions o;
  o.image_size = cfg.resolution;
  o.base_channels = cfg.gen_base_channels;
  o.min_channels = cfg.gen_min_channels;
  o.z_img_dim = cfg.z_img_dim;
  o.z_region_dim = cfg.z_region_dim;
  o.embed_dim = cfg.embed_dim;
  o.mask_size = cfg.mask_size;
  o.max_regions = cfg.max_regions;
  return o;
}

disc::DiscriminatorOptions discriminator_options(const TrainConfig& cfg) {
  disc::DiscriminatorOptions o;
  o.image_size = cfg.resolution;
  o.base_channels = cfg.disc_base_channels;
  o.region_dim = cfg.region_dim;
  o.embed_dim = cfg.embed_dim;
  o.roi_bins = cfg.roi_bins;
  return o;
}

damsm::ImageEncoderOptions image_encoder_options(const TrainConfig& cfg) {
  return {cfg.damsm_crop, cfg.word_dim, cfg.embed_dim, cfg.damsm_channels};
}

eval::OracleOptions oracle_options(const TrainConfig& cfg) { return {cfg.oracle_crop, cfg.oracle_window}; }

Models Models::create(const TrainConfig& config, text::Vocabulary vocab) {
  config.validate();
  Models m;
  m.config = config;
  m.vocab = std::move(vocab);
  seed_init(config, kInitText);
  m.text = text::TextEncoder(text::TextEncoderOptions{m.vocab.size(), config.word_dim, config.embed_dim});
  seed_init(config, kInitImage);
  m.image_encoder = damsm::ImageEncoder(image_encoder_options(config));
  seed_init(config, kInitGen);
  m.generator = gen::Generator(generator_options(config));
  seed_init(config, kInitDisc);
  m.discriminator = disc::Discriminator(discriminator_options(config));
  seed_init(config, kInitOracle);
  m.oracle = eval::Oracle(oracle_options(config));
  if (config.ema) {
    seed_init(config, kInitGen);
    m.generator_ema = gen::Generator(generator_options(config));
    ckpt::Checkpoint copy;
    ckpt::store_module(copy, kGenerator, *m.generator);
    ckpt::restore_module(copy, kGenerator, *m.generator_ema);
    set_trainable(*m.generator_ema, false);
  }
  return m;
}

Models Models::from_checkpoint(const ckpt::Checkpoint& ckpt) {
  auto m = create(parse_config(ckpt.config_text), text::Vocabulary::from_json(ckpt.vocab));
  m.load_available(ckpt);
  return m;
}

ckpt::Checkpoint Models::to_checkpoint(std::int64_t step, std::int64_t epoch) const {
  ckpt::Checkpoint c;
  c.config_hash = config.hash();
  c.config_text = config.to_text();
  c.vocab = vocab.to_json();
  c.step = step;
  c.epoch = epoch;
  ckpt::store_module(c, kText, *text);
  ckpt::store_module(c, kImageEncoder, *image_encoder);
  ckpt::store_module(c, kGenerator, *generator);
  ckpt::store_module(c, kDiscriminator, *discriminator);
  ckpt::store_module(c, kOracle, *oracle);
  if (generator_ema) ckpt::store_module(c, kGeneratorEma, *generator_ema);
  return c;
}

std::vector<std::string> Models::load_available(const ckpt::Checkpoint& ckpt) {
  std::vector<std::string> loaded;
  auto load = [&](const char* prefix, torch::nn::Module& module) {
    if (!ckpt.has_prefix(prefix)) return;
    ckpt::restore_module(ckpt, prefix, module);
    loaded.emplace_back(prefix);
  };
  load(kText, *text);
  load(kImageEncoder, *image_encoder);
  load(kGenerator, *generator);
  load(kDiscriminator, *discriminator);
  load(kOracle, *oracle);
  if (generator_ema) load(kGeneratorEma, *generator_ema);
  return loaded;
}

std::uint64_t parameter_hash(const torch::nn::Module& module) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&](const torch::Tensor& t) {
    const auto c = t.detach().contiguous();
    const auto* p = static_cast<const unsigned char*>(c.data_ptr());
    const auto n = static_cast<std::size_t>(c.numel()) * c.element_size();
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& p : module.named_parameters()) mix(p.value());
  for (const auto& b : module.named_buffers()) mix(b.value());
  return h;
}

void set_trainable(torch::nn::Module& module, bool trainable) {
  for (auto& p : module.parameters()) p.set_requires_grad(trainable);
}

text::TextEncoding encode_tokens(text::TextEncoder& encoder, const torch::Tensor& ids, const torch::Tensor& lengths) {
  return encoder->forward(ids, lengths);
}

torch::Tensor scatter_regions(const torch::Tensor& flat, const torch::Tensor& valid) {
  std::vector<std::int64_t> shape = valid.sizes().vec();
  shape.push_back(flat.size(1));
  auto full = torch::zeros(shape, flat.options());
  return full.index_put({valid}, flat);
}

SampleLatents latents_from_seeds(const gen::GeneratorOptions& opts, std::uint64_t global_seed,
                                 std::span<const std::uint64_t> region_seeds) {
  SampleLatents out;
  out.z_img = gen::seeded_normal({opts.z_img_dim}, global_seed);
  std::vector<torch::Tensor> rows;
  for (auto s : region_seeds) rows.push_back(gen::seeded_normal({opts.z_region_dim}, s));
  out.z_regions = rows.empty() ? torch::zeros({0, opts.z_region_dim}) : torch::stack(rows);
  return out;
}

}  // namespace dtc
