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
#include <filesystem>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

namespace dtc::ckpt {

inline constexpr std::uint32_t kFormatVersion = 1;

/// In-memory checkpoint. On disk:
///   8 bytes magic "DTCCKPT\0", u32 version, u64 header length,
///   JSON header, then each tensor's little-endian row-major data at the
///   offset (relative to the end of the header) recorded in the header index.
struct Checkpoint {
  std::uint32_t format_version = kFormatVersion;
  std::uint64_t config_hash = 0;
  std::int64_t step = 0;
  std::int64_t epoch = 0;
  std::string config_text;
  nlohmann::json vocab;
  nlohmann::json meta = nlohmann::json::object();
  std::map<std::string, torch::Tensor> tensors;

  bool has_prefix(const std::string& prefix) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Copies parameters and buffers under `prefix`.
void store_module(Checkpoint& ckpt, const std::string& prefix, const torch::nn::Module& module);
/// Loads every parameter and buffer of `module` from `prefix`; throws on a
/// missing name or shape mismatch.
void restore_module(const Checkpoint& ckpt, const std::string& prefix, torch::nn::Module& module);

/// Adam moments keyed by the owning module's parameter names.
void store_adam(Checkpoint& ckpt, const std::string& prefix, const torch::nn::Module& module,
                torch::optim::Adam& optimizer);
void restore_adam(const Checkpoint& ckpt, const std::string& prefix, const torch::nn::Module& module,
                  torch::optim::Adam& optimizer);

}  // namespace dtc::ckpt
