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

#include "dtc/service.hpp"

#include <httplib.h>

#include <random>
#include <stdexcept>
#include <thread>

#include "dtc/dataset.hpp"

namespace dtc::service {

using nlohmann::json;

namespace {

HttpResponse json_response(int status, const json& j) { return {status, j.dump(), "application/json"}; }

HttpResponse unloaded() {
  return json_response(503, {{"error", {{"reason", "no_model"}, {"message", "no checkpoint loaded"}}}});
}

ValidationError fail(std::string reason, std::string message, std::optional<int> region = std::nullopt) {
  return {std::move(reason), std::move(message), region};
}

std::optional<std::uint64_t> parse_seed(const json& j) {
  if (j.is_number_unsigned()) return j.get<std::uint64_t>();
  if (j.is_number_integer() && j.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(j.get<std::int64_t>());
  return std::nullopt;
}

std::uint64_t fresh_seed() {
  static std::random_device device;
  const std::uint64_t hi = device();
  const std::uint64_t lo = device();
  return ((hi << 32) | lo) & kMaxFreshSeed;
}

scene::Image tensor_to_image(const torch::Tensor& chw) {
  const auto hwc = chw.permute({1, 2, 0}).contiguous().to(torch::kFloat32);
  scene::Image img;
  img.height = static_cast<int>(hwc.size(0));
  img.width = static_cast<int>(hwc.size(1));
  img.data.assign(hwc.data_ptr<float>(), hwc.data_ptr<float>() + hwc.numel());
  return img;
}

}  // namespace

json ValidationError::to_json() const {
  json e = {{"reason", reason}, {"message", message}};
  if (region) e["region"] = *region;
  return {{"error", e}};
}

std::variant<GenerateRequest, ValidationError> parse_generate_request(const std::string& body, int max_regions) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::parse_error& e) {
    return fail("malformed_json", e.what());
  }
  if (!j.is_object()) return fail("not_an_object", "request must be a JSON object");
  GenerateRequest req;
  if (j.contains("global_seed") && !j["global_seed"].is_null()) {
    auto s = parse_seed(j["global_seed"]);
    if (!s) return fail("bad_seed", "global_seed must be a non-negative integer");
    req.global_seed = s;
  }
  if (!j.contains("regions") || !j["regions"].is_array() || j["regions"].empty()) {
    return fail("no_regions", "regions must be a non-empty array");
  }
  const auto& regions = j["regions"];
  if (static_cast<int>(regions.size()) > max_regions) {
    return fail("too_many_regions", "at most " + std::to_string(max_regions) + " regions");
  }
  for (int i = 0; i < static_cast<int>(regions.size()); ++i) {
    const auto& r = regions[static_cast<std::size_t>(i)];
    if (!r.is_object()) return fail("region_not_object", "region must be an object", i);
    if (!r.contains("box") || !r["box"].is_array() || r["box"].size() != 4) {
      return fail("box_arity", "box must be [x1, y1, x2, y2]", i);
    }
    std::array<double, 4> v{};
    for (std::size_t k = 0; k < 4; ++k) {
      if (!r["box"][k].is_number()) return fail("box_not_number", "box entries must be numbers", i);
      v[k] = r["box"][k].get<double>();
    }
    if (v[2] <= v[0]) return fail("box_x_order", "box: x2 ≤ x1", i);
    if (v[3] <= v[1]) return fail("box_y_order", "box: y2 ≤ y1", i);
    if (v[0] < 0 || v[1] < 0 || v[2] > 1 || v[3] > 1) return fail("box_out_of_range", "box must lie in [0, 1]", i);
    if (!r.contains("caption") || !r["caption"].is_string()) return fail("caption_missing", "caption must be a string", i);
    const auto caption = r["caption"].get<std::string>();
    if (text::split_whitespace(caption).empty()) return fail("caption_empty", "caption is empty", i);
    RequestRegion out{{v[0], v[1], v[2], v[3]}, caption, std::nullopt};
    if (r.contains("region_seed") && !r["region_seed"].is_null()) {
      auto s = parse_seed(r["region_seed"]);
      if (!s) return fail("bad_seed", "region_seed must be a non-negative integer", i);
      out.region_seed = s;
    }
    req.regions.push_back(std::move(out));
  }
  return req;
}

InferenceService::InferenceService(Models models) : models_(std::make_unique<Models>(std::move(models))) {
  models_->text->eval();
  auto& g = models_->inference_generator();
  g->eval();
  const auto h = parameter_hash(*g) ^ (parameter_hash(*models_->text) * 0x9e3779b97f4a7c15ULL);
  model_hash_ = hex64(h);
}

HttpResponse InferenceService::handle_health() const { return {200, "ok", "text/plain"}; }

HttpResponse InferenceService::handle_meta() const {
  if (!loaded()) return unloaded();
  const auto& cfg = models_->config;
  return json_response(200, {{"resolution", cfg.resolution},
                             {"max_regions", cfg.max_regions},
                             {"max_tokens", cfg.max_tokens},
                             {"vocabulary", models_->vocab.tokens()},
                             {"vocab_size", models_->vocab.size()},
                             {"model_hash", model_hash_},
                             {"config_hash", hex64(cfg.hash())}});
}

GenerateResult InferenceService::generate(const GenerateRequest& req) {
  if (!loaded()) throw std::runtime_error("generate: no model loaded");
  const auto& cfg = models_->config;
  const auto m = static_cast<std::int64_t>(req.regions.size());
  GenerateResult out;
  out.global_seed = req.global_seed.value_or(fresh_seed());
  std::vector<text::TokenSeq> tokens;
  std::vector<float> boxes;
  for (std::int64_t i = 0; i < m; ++i) {
    const auto& r = req.regions[static_cast<std::size_t>(i)];
    out.region_seeds.push_back(r.region_seed.value_or(fresh_seed()));
    std::vector<std::string> unknown;
    tokens.push_back(text::tokenize(r.caption, models_->vocab, static_cast<int>(cfg.max_tokens), &unknown));
    for (const auto& u : unknown) out.warnings.push_back({{"region", i}, {"code", "unknown_token"}, {"token", u}});
    boxes.insert(boxes.end(), {static_cast<float>(r.box.x1), static_cast<float>(r.box.y1), static_cast<float>(r.box.x2),
                               static_cast<float>(r.box.y2)});
  }

  std::lock_guard lock(mutex_);
  torch::NoGradGuard no_grad;
  auto& g = models_->inference_generator();
  const auto [ids, lengths] = text::batch_tokens(tokens);
  const auto e = models_->text->forward(ids, lengths).sentence.unsqueeze(0);
  const auto lat = latents_from_seeds(g->options(), out.global_seed, out.region_seeds);
  const gen::GenerateInput input{lat.z_img.unsqueeze(0), lat.z_regions.unsqueeze(0),
                                 {torch::tensor(boxes).reshape({1, m, 4}), torch::ones({1, m}, torch::kBool), e}};
  out.png = data::encode_png(tensor_to_image(gen::generate(g, input)[0]));
  return out;
}

HttpResponse InferenceService::handle_generate(const std::string& body) {
  if (!loaded()) return unloaded();
  auto parsed = parse_generate_request(body, static_cast<int>(models_->config.max_regions));
  if (auto* err = std::get_if<ValidationError>(&parsed)) return json_response(400, err->to_json());
  const auto r = generate(std::get<GenerateRequest>(parsed));
  return json_response(200, {{"image", httplib::detail::base64_encode(r.png)},
                             {"seeds", {{"global", r.global_seed}, {"regions", r.region_seeds}}},
                             {"warnings", r.warnings},
                             {"model_hash", model_hash_},
                             {"resolution", models_->config.resolution}});
}

struct HttpServer::Impl {
  InferenceService& service;
  httplib::Server server;
  std::thread thread;

  explicit Impl(InferenceService& s) : service(s) {
    auto reply = [](httplib::Response& res, const HttpResponse& r) {
      res.status = r.status;
      res.set_content(r.body, r.content_type);
    };
    server.Post("/generate", [this, reply](const httplib::Request& req, httplib::Response& res) {
      reply(res, service.handle_generate(req.body));
    });
    server.Get("/meta", [this, reply](const httplib::Request&, httplib::Response& res) {
      reply(res, service.handle_meta());
    });
    server.Get("/health", [this, reply](const httplib::Request&, httplib::Response& res) {
      reply(res, service.handle_health());
    });
    server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      std::string what = "internal error";
      try {
        std::rethrow_exception(ep);
      } catch (const std::exception& e) {
        what = e.what();
      } catch (...) {
      }
      res.status = 500;
      res.set_content(json{{"error", {{"reason", "internal"}, {"message", what}}}}.dump(), "application/json");
    });
  }
};

HttpServer::HttpServer(InferenceService& service) : impl_(std::make_unique<Impl>(service)) {}

HttpServer::~HttpServer() { stop(); }

int HttpServer::start(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port(host);
  } else if (!impl_->server.bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) throw std::runtime_error("http: cannot bind " + host + ":" + std::to_string(port));
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

void HttpServer::listen(const std::string& host, int port) {
  if (!impl_->server.listen(host, port)) throw std::runtime_error("http: cannot listen on " + host + ":" + std::to_string(port));
}

void HttpServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace dtc::service
