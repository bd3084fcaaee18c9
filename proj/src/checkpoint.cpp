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

#include "dtc/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace dtc::ckpt {

namespace fs = std::filesystem;

namespace {

constexpr std::array<char, 8> kMagic = {'D', 'T', 'C', 'C', 'K', 'P', 'T', '\0'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

std::string dtype_name(torch::ScalarType t) {
  switch (t) {
    case torch::kFloat32:
      return "float32";
    case torch::kFloat64:
      return "float64";
    case torch::kInt64:
      return "int64";
    default:
      throw std::invalid_argument(std::string("checkpoint: unsupported dtype ") + c10::toString(t));
  }
}

torch::ScalarType parse_dtype(const std::string& s) {
  if (s == "float32") return torch::kFloat32;
  if (s == "float64") return torch::kFloat64;
  if (s == "int64") return torch::kInt64;
  throw std::runtime_error("checkpoint: unknown dtype '" + s + "'");
}

template <typename T>
void write_pod(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

}  // namespace

bool Checkpoint::has_prefix(const std::string& prefix) const {
  auto it = tensors.lower_bound(prefix);
  return it != tensors.end() && it->first.compare(0, prefix.size(), prefix) == 0;
}

void save_checkpoint(const fs::path& path, const Checkpoint& ckpt) {
  nlohmann::json header;
  header["format_version"] = ckpt.format_version;
  header["config_hash"] = ckpt.config_hash;
  header["step"] = ckpt.step;
  header["epoch"] = ckpt.epoch;
  header["config"] = ckpt.config_text;
  header["vocab"] = ckpt.vocab;
  header["meta"] = ckpt.meta;
  auto index = nlohmann::json::array();
  std::vector<torch::Tensor> blobs;
  std::uint64_t offset = 0;
  for (const auto& [name, tensor] : ckpt.tensors) {
    auto t = tensor.detach().to(torch::kCPU).contiguous();
    const auto nbytes = static_cast<std::uint64_t>(t.numel()) * t.element_size();
    index.push_back({{"name", name},
                     {"dtype", dtype_name(t.scalar_type())},
                     {"shape", t.sizes().vec()},
                     {"offset", offset},
                     {"nbytes", nbytes}});
    offset += nbytes;
    blobs.push_back(std::move(t));
  }
  header["tensors"] = std::move(index);
  const std::string text = header.dump();

  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("checkpoint: cannot write " + tmp.string());
    out.write(kMagic.data(), kMagic.size());
    write_pod<std::uint32_t>(out, ckpt.format_version);
    write_pod<std::uint64_t>(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& t : blobs) {
      out.write(static_cast<const char*>(t.data_ptr()), static_cast<std::streamsize>(t.numel() * t.element_size()));
    }
    if (!out) throw std::runtime_error("checkpoint: write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot read " + path.string());
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw std::runtime_error("checkpoint: bad magic in " + path.string());
  Checkpoint ckpt;
  ckpt.format_version = read_pod<std::uint32_t>(in);
  if (ckpt.format_version != kFormatVersion) {
    throw std::runtime_error("checkpoint: unsupported format version " + std::to_string(ckpt.format_version));
  }
  const auto header_len = read_pod<std::uint64_t>(in);
  std::string text(header_len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw std::runtime_error("checkpoint: truncated header");
  const auto header = nlohmann::json::parse(text);
  ckpt.config_hash = header.at("config_hash").get<std::uint64_t>();
  ckpt.step = header.at("step").get<std::int64_t>();
  ckpt.epoch = header.at("epoch").get<std::int64_t>();
  ckpt.config_text = header.at("config").get<std::string>();
  ckpt.vocab = header.at("vocab");
  ckpt.meta = header.value("meta", nlohmann::json::object());
  const auto data_start = static_cast<std::uint64_t>(in.tellg());
  for (const auto& entry : header.at("tensors")) {
    const auto shape = entry.at("shape").get<std::vector<std::int64_t>>();
    auto t = torch::empty(shape, torch::TensorOptions().dtype(parse_dtype(entry.at("dtype").get<std::string>())));
    const auto nbytes = entry.at("nbytes").get<std::uint64_t>();
    if (nbytes != static_cast<std::uint64_t>(t.numel()) * t.element_size()) {
      throw std::runtime_error("checkpoint: size mismatch for " + entry.at("name").get<std::string>());
    }
    in.seekg(static_cast<std::streamoff>(data_start + entry.at("offset").get<std::uint64_t>()));
    in.read(static_cast<char*>(t.data_ptr()), static_cast<std::streamsize>(nbytes));
    if (!in) throw std::runtime_error("checkpoint: truncated tensor data");
    ckpt.tensors.emplace(entry.at("name").get<std::string>(), std::move(t));
  }
  return ckpt;
}

void store_module(Checkpoint& ckpt, const std::string& prefix, const torch::nn::Module& module) {
  for (const auto& p : module.named_parameters()) ckpt.tensors[prefix + p.key()] = p.value().detach().clone();
  for (const auto& b : module.named_buffers()) ckpt.tensors[prefix + b.key()] = b.value().detach().clone();
}

void restore_module(const Checkpoint& ckpt, const std::string& prefix, torch::nn::Module& module) {
  torch::NoGradGuard no_grad;
  auto load = [&](const std::string& name, torch::Tensor& target) {
    auto it = ckpt.tensors.find(prefix + name);
    if (it == ckpt.tensors.end()) throw std::runtime_error("checkpoint: missing tensor " + prefix + name);
    if (it->second.sizes() != target.sizes()) {
      throw std::runtime_error("checkpoint: shape mismatch for " + prefix + name);
    }
    target.copy_(it->second);
  };
  for (auto& p : module.named_parameters()) load(p.key(), p.value());
  for (auto& b : module.named_buffers()) load(b.key(), b.value());
}

void store_adam(Checkpoint& ckpt, const std::string& prefix, const torch::nn::Module& module,
                torch::optim::Adam& optimizer) {
  auto& state = optimizer.state();
  for (const auto& p : module.named_parameters()) {
    auto it = state.find(p.value().unsafeGetTensorImpl());
    if (it == state.end()) continue;
    const auto& s = static_cast<const torch::optim::AdamParamState&>(*it->second);
    ckpt.tensors[prefix + p.key() + ".step"] = torch::tensor(s.step(), torch::kInt64);
    ckpt.tensors[prefix + p.key() + ".exp_avg"] = s.exp_avg().detach().clone();
    ckpt.tensors[prefix + p.key() + ".exp_avg_sq"] = s.exp_avg_sq().detach().clone();
  }
}

void restore_adam(const Checkpoint& ckpt, const std::string& prefix, const torch::nn::Module& module,
                  torch::optim::Adam& optimizer) {
  auto& state = optimizer.state();
  for (const auto& p : module.named_parameters()) {
    const auto base = prefix + p.key();
    auto step = ckpt.tensors.find(base + ".step");
    if (step == ckpt.tensors.end()) continue;
    auto s = std::make_unique<torch::optim::AdamParamState>();
    s->step(step->second.item<std::int64_t>());
    s->exp_avg(ckpt.tensors.at(base + ".exp_avg").clone());
    s->exp_avg_sq(ckpt.tensors.at(base + ".exp_avg_sq").clone());
    state[p.value().unsafeGetTensorImpl()] = std::move(s);
  }
}

}  // namespace dtc::ckpt
