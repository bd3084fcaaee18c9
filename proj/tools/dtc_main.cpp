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

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <variant>

#include "dtc/batch.hpp"
#include "dtc/config.hpp"
#include "dtc/dataset.hpp"
#include "dtc/metrics.hpp"
#include "dtc/models.hpp"
#include "dtc/service.hpp"
#include "dtc/trainer.hpp"

namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string data = "data";
};

dtc::TrainConfig resolve_config(const Common& c) {
  auto cfg = c.config.empty() ? dtc::TrainConfig{} : dtc::load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  cfg.validate();
  return cfg;
}

std::function<void(const dtc::train::StepLog&)> logger(std::int64_t every) {
  auto t0 = std::chrono::steady_clock::now();
  return [every, t0](const dtc::train::StepLog& log) {
    if (every <= 0 || log.step % every != 0) return;
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::fprintf(stderr, "[%s] step %lld epoch %lld t=%.0fs", log.phase.c_str(), static_cast<long long>(log.step),
                 static_cast<long long>(log.epoch), secs);
    for (const auto& [k, v] : log.values) std::fprintf(stderr, " %s=%.4f", k.c_str(), v);
    std::fprintf(stderr, "\n");
  };
}

dtc::data::SampleSet load(const dtc::data::DatasetManifest& manifest, dtc::data::Split split, const dtc::Models& m) {
  return dtc::data::load_split(manifest, split, m.vocab, m.config.resolution, static_cast<int>(m.config.max_tokens),
                               static_cast<int>(m.config.scene_max_tokens));
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << j.dump(2) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dtc: layout-and-caption conditioned image generation"};
  app.require_subcommand(1);

  // data gen
  auto* data = app.add_subcommand("data", "dataset tools");
  data->require_subcommand(1);
  auto* data_gen = data->add_subcommand("gen", "render a synthetic dataset");
  int n_images = 10000;
  std::uint64_t data_seed = 0;
  std::string data_out = "data";
  data_gen->add_option("--n", n_images, "number of images")->capture_default_str();
  data_gen->add_option("--seed", data_seed, "dataset seed")->capture_default_str();
  data_gen->add_option("--out", data_out, "output directory")->capture_default_str();

  // train
  auto* train = app.add_subcommand("train", "training phases");
  train->require_subcommand(1);
  Common tc;
  std::string out_ckpt;
  std::string resume;
  std::string init_ckpt;
  std::int64_t stop_after = 0;
  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", tc.config, "config file (key = value lines)");
    cmd->add_option("--seed", tc.seed, "overrides the config seed");
    cmd->add_option("--data", tc.data, "dataset directory")->capture_default_str();
    cmd->add_option("--out", out_ckpt, "checkpoint to write")->required();
    cmd->add_option("--resume", resume, "checkpoint of the same phase to continue");
    cmd->add_option("--stop-after", stop_after, "stop after this many total steps");
  };
  auto* train_damsm = train->add_subcommand("damsm", "pretrain the text and region-crop encoders");
  add_common(train_damsm);
  auto* train_oracle = train->add_subcommand("oracle", "fit the attribute oracle");
  add_common(train_oracle);
  train_oracle->add_option("--init", init_ckpt, "checkpoint to extend (typically the DAMSM one)");
  auto* train_gan = train->add_subcommand("gan", "adversarial training");
  add_common(train_gan);
  train_gan->add_option("--init", init_ckpt, "checkpoint with trained encoders and oracle")->required();

  // eval
  auto* eval = app.add_subcommand("eval", "compute the metrics report");
  std::string eval_ckpt;
  std::string eval_split = "test";
  std::string eval_out = "report.json";
  std::string eval_data = "data";
  std::uint64_t eval_seed = 0;
  std::int64_t eval_candidates = 10;
  eval->add_option("--ckpt", eval_ckpt, "trained checkpoint")->required();
  eval->add_option("--split", eval_split, "train, val or test")->capture_default_str();
  eval->add_option("--out", eval_out, "report path")->capture_default_str();
  eval->add_option("--data", eval_data, "dataset directory")->capture_default_str();
  eval->add_option("--seed", eval_seed, "evaluation seed")->capture_default_str();
  eval->add_option("--candidates", eval_candidates, "R-precision pool size")->capture_default_str();
  eval->add_option("--config", tc.config, "ignored; the checkpoint carries its config");
  eval->add_option("--resume", resume, "ignored");

  // generate
  auto* generate = app.add_subcommand("generate", "render one layout");
  std::string gen_ckpt;
  std::string gen_layout;
  std::string gen_out = "out.png";
  std::optional<std::uint64_t> gen_seed;
  generate->add_option("--ckpt", gen_ckpt, "trained checkpoint")->required();
  generate->add_option("--layout", gen_layout, "GenerateRequest JSON file")->required();
  generate->add_option("--out", gen_out, "PNG path")->capture_default_str();
  generate->add_option("--seed", gen_seed, "global seed when the layout has none");
  generate->add_option("--config", tc.config, "ignored; the checkpoint carries its config");
  generate->add_option("--resume", resume, "ignored");

  // serve
  auto* serve = app.add_subcommand("serve", "HTTP inference service");
  std::string serve_ckpt;
  std::string host = "127.0.0.1";
  int port = 8080;
  serve->add_option("--ckpt", serve_ckpt, "trained checkpoint; omitted: serve unloaded (503)");
  serve->add_option("--host", host)->capture_default_str();
  serve->add_option("--port", port)->capture_default_str();
  serve->add_option("--config", tc.config, "ignored; the checkpoint carries its config");
  serve->add_option("--seed", gen_seed, "ignored");
  serve->add_option("--resume", resume, "ignored");

  CLI11_PARSE(app, argc, argv);

  try {
    if (data_gen->parsed()) {
      const auto m = dtc::data::build_dataset(n_images, data_out, data_seed);
      std::printf("wrote %zu images to %s\n", m.total_records(), data_out.c_str());
      return 0;
    }

    dtc::train::RunOptions run;
    run.checkpoint_path = out_ckpt;
    if (!resume.empty()) run.resume = fs::path(resume);
    run.stop_after = stop_after;

    if (train_damsm->parsed()) {
      const auto cfg = resolve_config(tc);
      const auto manifest = dtc::data::load_dataset(tc.data);
      auto models = dtc::Models::create(cfg, dtc::text::build_vocab(std::span(&manifest, 1)));
      const auto train_set = load(manifest, dtc::data::Split::train, models);
      run.on_step = logger(cfg.log_every);
      const auto r = dtc::train::pretrain_damsm(models, train_set, run);
      const auto val = load(manifest, dtc::data::Split::val, models);
      const double top1 = dtc::eval::damsm_retrieval_top1(models, val, 20, cfg.seed);
      std::printf("damsm: %lld steps, val top-1 of 20 = %.4f\n", static_cast<long long>(r.steps), top1);
      return 0;
    }

    if (train_oracle->parsed()) {
      const auto manifest = dtc::data::load_dataset(tc.data);
      std::optional<dtc::ckpt::Checkpoint> base;
      if (!init_ckpt.empty()) base = dtc::ckpt::load_checkpoint(init_ckpt);
      auto models = base ? dtc::Models::from_checkpoint(*base)
                         : dtc::Models::create(resolve_config(tc), dtc::text::build_vocab(std::span(&manifest, 1)));
      if (base && !tc.config.empty()) {
        // Only schedule keys may differ from the extended checkpoint.
        const auto cfg = resolve_config(tc);
        if (cfg.hash() != models.config.hash()) {
          throw std::runtime_error("--config disagrees with the --init checkpoint on model-defining keys");
        }
        models.config = cfg;
      }
      const auto train_set = load(manifest, dtc::data::Split::train, models);
      const auto val = load(manifest, dtc::data::Split::val, models);
      const auto acc = dtc::train::train_oracle(models, train_set, val, logger(models.config.log_every));
      auto c = models.to_checkpoint(base ? base->step : 0, base ? base->epoch : 0);
      c.meta = base ? base->meta : nlohmann::json::object();
      c.meta["oracle_val_accuracy"] = acc.to_json();
      dtc::ckpt::save_checkpoint(out_ckpt, c);
      std::printf("oracle val accuracy: %s\n", acc.to_json().dump().c_str());
      return 0;
    }

    if (train_gan->parsed()) {
      const auto cfg = resolve_config(tc);
      const auto base = dtc::ckpt::load_checkpoint(init_ckpt);
      auto models = dtc::Models::create(cfg, dtc::text::Vocabulary::from_json(base.vocab));
      for (const char* prefix : {"text.", "img_enc.", "oracle."}) {
        if (!base.has_prefix(prefix)) throw std::runtime_error(std::string("--init checkpoint lacks ") + prefix + "* tensors");
      }
      dtc::ckpt::Checkpoint encoders = base;
      std::erase_if(encoders.tensors, [](const auto& kv) {
        return kv.first.rfind("text.", 0) != 0 && kv.first.rfind("img_enc.", 0) != 0 && kv.first.rfind("oracle.", 0) != 0;
      });
      models.load_available(encoders);
      const auto manifest = dtc::data::load_dataset(tc.data);
      const auto train_set = load(manifest, dtc::data::Split::train, models);
      run.on_step = logger(cfg.log_every);
      const auto r = dtc::train::train_gan(models, train_set, run);
      std::printf("gan: %lld steps, %lld epochs\n", static_cast<long long>(r.steps),
                  static_cast<long long>(r.epochs_completed));
      return 0;
    }

    if (eval->parsed()) {
      auto models = dtc::Models::from_checkpoint(dtc::ckpt::load_checkpoint(eval_ckpt));
      const auto manifest = dtc::data::load_dataset(eval_data);
      const auto split = load(manifest, dtc::data::parse_split(eval_split), models);
      const auto report = dtc::eval::evaluate(models, split, eval_seed, eval_candidates);
      write_json(eval_out, report.to_json());
      std::printf("%s\n", report.to_json().dump(2).c_str());
      return 0;
    }

    if (generate->parsed()) {
      dtc::service::InferenceService service(dtc::Models::from_checkpoint(dtc::ckpt::load_checkpoint(gen_ckpt)));
      std::ifstream f(gen_layout);
      if (!f) throw std::runtime_error("cannot read " + gen_layout);
      auto request = nlohmann::json::parse(f);
      if (gen_seed && !request.contains("global_seed")) request["global_seed"] = *gen_seed;
      const auto parsed = dtc::service::parse_generate_request(request.dump(), static_cast<int>(service.max_regions()));
      if (const auto* err = std::get_if<dtc::service::ValidationError>(&parsed)) {
        std::fprintf(stderr, "%s\n", err->to_json().dump().c_str());
        return 2;
      }
      const auto r = service.generate(std::get<dtc::service::GenerateRequest>(parsed));
      std::ofstream out(gen_out, std::ios::binary);
      out.write(r.png.data(), static_cast<std::streamsize>(r.png.size()));
      std::printf("%s\n", nlohmann::json{{"seeds", {{"global", r.global_seed}, {"regions", r.region_seeds}}},
                                         {"warnings", r.warnings}}.dump().c_str());
      return 0;
    }

    if (serve->parsed()) {
      auto service = serve_ckpt.empty()
                         ? std::make_unique<dtc::service::InferenceService>()
                         : std::make_unique<dtc::service::InferenceService>(
                               dtc::Models::from_checkpoint(dtc::ckpt::load_checkpoint(serve_ckpt)));
      dtc::service::HttpServer server(*service);
      std::fprintf(stderr, "serving on %s:%d\n", host.c_str(), port);
      server.listen(host, port);
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
