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

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "dtc/models.hpp"
#include "dtc/scene.hpp"

namespace dtc::service {

struct HttpResponse {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

struct RequestRegion {
  scene::Box box;
  std::string caption;
  std::optional<std::uint64_t> region_seed;
};

struct GenerateRequest {
  std::vector<RequestRegion> regions;
  std::optional<std::uint64_t> global_seed;
};

/// Machine-readable rejection of a request. `reason` is one of:
/// malformed_json, not_an_object, no_regions, too_many_regions, region_not_object,
/// box_arity, box_not_number, box_out_of_range, box_x_order, box_y_order,
/// caption_missing, caption_empty, bad_seed.
struct ValidationError {
  std::string reason;
  std::string message;
  std::optional<int> region;
  nlohmann::json to_json() const;
};

std::variant<GenerateRequest, ValidationError> parse_generate_request(const std::string& body, int max_regions);

/// Largest seed handed out when the client omits one; stays exact in JSON
/// consumers that use doubles.
inline constexpr std::uint64_t kMaxFreshSeed = (std::uint64_t{1} << 53) - 1;

struct GenerateResult {
  std::string png;
  std::uint64_t global_seed = 0;
  std::vector<std::uint64_t> region_seeds;
  nlohmann::json warnings = nlohmann::json::array();
};

/// Holds one immutable model; generate calls are serialized.
class InferenceService {
 public:
  InferenceService() = default;
  explicit InferenceService(Models models);

  bool loaded() const { return models_ != nullptr; }
  /// Validated request to PNG bytes plus the seeds actually used.
  GenerateResult generate(const GenerateRequest& request);
  HttpResponse handle_generate(const std::string& body);
  HttpResponse handle_meta() const;
  HttpResponse handle_health() const;
  const std::string& model_hash() const { return model_hash_; }
  std::int64_t max_regions() const { return loaded() ? models_->config.max_regions : 0; }

 private:
  std::unique_ptr<Models> models_;
  std::string model_hash_;
  std::mutex mutex_;
};

/// Minimal HTTP front end: POST /generate, GET /meta, GET /health.
class HttpServer {
 public:
  explicit HttpServer(InferenceService& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds (port 0 picks a free port) and serves on a background thread.
  int start(const std::string& host, int port);
  /// Blocks serving on the calling thread.
  void listen(const std::string& host, int port);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace dtc::service
