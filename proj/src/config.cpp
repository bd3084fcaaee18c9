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

#include "dtc/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>
#include <variant>

namespace dtc {

namespace {

using Field = std::variant<std::int64_t*, double*, bool*, std::uint64_t*>;

struct Entry {
  const char* key;
  Field field;
  bool hashed;
};

std::vector<Entry> entries(TrainConfig& c) {
  return {
      {"resolution", &c.resolution, true},
      {"max_regions", &c.max_regions, true},
      {"max_tokens", &c.max_tokens, true},
      {"scene_max_tokens", &c.scene_max_tokens, true},
      {"word_dim", &c.word_dim, true},
      {"embed_dim", &c.embed_dim, true},
      {"z_img_dim", &c.z_img_dim, true},
      {"z_region_dim", &c.z_region_dim, true},
      {"gen_base_channels", &c.gen_base_channels, true},
      {"gen_min_channels", &c.gen_min_channels, true},
      {"mask_size", &c.mask_size, true},
      {"disc_base_channels", &c.disc_base_channels, true},
      {"region_dim", &c.region_dim, true},
      {"roi_bins", &c.roi_bins, true},
      {"damsm_crop", &c.damsm_crop, true},
      {"damsm_channels", &c.damsm_channels, true},
      {"oracle_crop", &c.oracle_crop, true},
      {"oracle_window", &c.oracle_window, true},
      {"batch_size", &c.batch_size, true},
      {"lr_g", &c.lr_g, true},
      {"lr_d", &c.lr_d, true},
      {"lr_damsm", &c.lr_damsm, true},
      {"lr_oracle", &c.lr_oracle, true},
      {"beta1", &c.beta1, true},
      {"beta2", &c.beta2, true},
      {"lambda_image", &c.weights.lambda_image, true},
      {"lambda_region", &c.weights.lambda_region, true},
      {"c_damsm", &c.weights.damsm, true},
      {"c_mmrfm", &c.weights.mmrfm, true},
      {"c_perceptual", &c.weights.perceptual, true},
      {"c_pixel", &c.weights.pixel, true},
      {"damsm_gamma1", &c.damsm.gamma1, true},
      {"damsm_gamma2", &c.damsm.gamma2, true},
      {"damsm_gamma3", &c.damsm.gamma3, true},
      {"damsm_on_regions", &c.damsm_on_regions, true},
      {"damsm_scene_pairs", &c.damsm_scene_pairs, true},
      {"ema", &c.ema, true},
      {"seed", &c.seed, true},
      {"epochs", &c.epochs, false},
      {"damsm_epochs", &c.damsm_epochs, false},
      {"oracle_epochs", &c.oracle_epochs, false},
      {"max_steps", &c.max_steps, false},
      {"checkpoint_every", &c.checkpoint_every, false},
      {"log_every", &c.log_every, false},
  };
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string format_value(const Field& f) {
  std::ostringstream ss;
  std::visit(
      [&](auto* p) {
        using T = std::remove_pointer_t<decltype(p)>;
        if constexpr (std::is_same_v<T, bool>) {
          ss << (*p ? "true" : "false");
        } else if constexpr (std::is_same_v<T, double>) {
          ss << std::setprecision(17) << *p;
        } else {
          ss << *p;
        }
      },
      f);
  return ss.str();
}

void assign(const Field& f, const std::string& key, const std::string& value) {
  std::visit(
      [&](auto* p) {
        using T = std::remove_pointer_t<decltype(p)>;
        if constexpr (std::is_same_v<T, bool>) {
          if (value == "true" || value == "1") {
            *p = true;
          } else if (value == "false" || value == "0") {
            *p = false;
          } else {
            throw std::invalid_argument("config: '" + key + "' expects true/false, got '" + value + "'");
          }
        } else if constexpr (std::is_same_v<T, double>) {
          std::size_t used = 0;
          try {
            *p = std::stod(value, &used);
          } catch (const std::exception&) {
            used = 0;
          }
          if (used != value.size() || value.empty()) {
            throw std::invalid_argument("config: '" + key + "' expects a number, got '" + value + "'");
          }
        } else {
          T parsed{};
          const auto* end = value.data() + value.size();
          auto [ptr, ec] = std::from_chars(value.data(), end, parsed);
          if (ec != std::errc() || ptr != end) {
            throw std::invalid_argument("config: '" + key + "' expects an integer, got '" + value + "'");
          }
          *p = parsed;
        }
      },
      f);
}

}  // namespace

void TrainConfig::validate() const {
  if (resolution != 32 && resolution != 64 && resolution != 128) {
    throw std::invalid_argument("config: resolution must be 32, 64 or 128");
  }
  if (batch_size < 2) throw std::invalid_argument("config: batch_size must be >= 2");
  if (max_regions < 1) throw std::invalid_argument("config: max_regions must be >= 1");
  if (max_tokens < 3 || scene_max_tokens < 3) throw std::invalid_argument("config: token limits must be >= 3");
  if (!(lr_g > 0 && lr_d > 0 && lr_damsm > 0 && lr_oracle > 0)) {
    throw std::invalid_argument("config: learning rates must be > 0");
  }
  if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) {
    throw std::invalid_argument("config: Adam betas must lie in [0, 1)");
  }
  if (!(oracle_window > 0 && oracle_window <= 1)) throw std::invalid_argument("config: oracle_window in (0, 1]");
  weights.validate();
  damsm.validate();
}

std::string TrainConfig::to_text() const {
  auto copy = *this;
  std::string out;
  for (const auto& e : entries(copy)) out += std::string(e.key) + " = " + format_value(e.field) + "\n";
  return out;
}

std::uint64_t TrainConfig::hash() const {
  auto copy = *this;
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& e : entries(copy)) {
    if (!e.hashed) continue;
    const std::string line = std::string(e.key) + "=" + format_value(e.field) + "\n";
    for (unsigned char ch : line) {
      h ^= ch;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

TrainConfig parse_config(const std::string& text, TrainConfig base) {
  auto table = entries(base);
  std::map<std::string, Field> by_key;
  for (const auto& e : table) by_key.emplace(e.key, e.field);
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash_pos = line.find('#'); hash_pos != std::string::npos) line.resize(hash_pos);
    const std::string content = trim(line);
    if (content.empty()) continue;
    const auto eq = content.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(content.substr(0, eq));
    const std::string value = trim(content.substr(eq + 1));
    auto it = by_key.find(key);
    if (it == by_key.end()) throw std::invalid_argument("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    assign(it->second, key, value);
  }
  base.validate();
  return base;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read config " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  // A leading "preset = name" line selects the base values.
  std::string text = ss.str();
  TrainConfig base;
  std::istringstream in(text);
  std::string first;
  std::string rest;
  std::string line;
  while (std::getline(in, line)) {
    const auto content = trim(line.substr(0, line.find('#')));
    if (content.rfind("preset", 0) == 0 && content.find('=') != std::string::npos) {
      base = preset_config(trim(content.substr(content.find('=') + 1)));
      continue;
    }
    rest += line + "\n";
  }
  return parse_config(rest, base);
}

TrainConfig preset_config(const std::string& name) {
  TrainConfig c;
  if (name == "desk") return c;
  if (name == "paper") {
    c.resolution = 128;
    c.batch_size = 128;
    c.epochs = 200;
    return c;
  }
  if (name == "tiny") {
    c.resolution = 32;
    c.batch_size = 4;
    c.word_dim = 16;
    c.embed_dim = 16;
    c.z_img_dim = 16;
    c.z_region_dim = 16;
    c.gen_base_channels = 32;
    c.gen_min_channels = 8;
    c.mask_size = 8;
    c.disc_base_channels = 8;
    c.region_dim = 32;
    c.damsm_channels = 8;
    c.epochs = 1;
    c.damsm_epochs = 1;
    c.oracle_epochs = 1;
    c.checkpoint_every = 0;
    c.log_every = 0;
    return c;
  }
  throw std::invalid_argument("unknown config preset '" + name + "'");
}

std::string hex64(std::uint64_t v) {
  std::ostringstream ss;
  ss << std::hex << std::setw(16) << std::setfill('0') << v;
  return ss.str();
}

}  // namespace dtc
