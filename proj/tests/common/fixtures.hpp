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

#include <filesystem>
#include <memory>
#include <random>
#include <string>

#include "dtc/batch.hpp"
#include "dtc/config.hpp"
#include "dtc/dataset.hpp"
#include "dtc/text.hpp"

namespace dtc::testing {

/// Small rendered dataset shared by every test in a process.
struct TinyCorpus {
  std::filesystem::path root;
  data::DatasetManifest manifest;
  text::Vocabulary vocab;
  TrainConfig config;
  data::SampleSet train;
  data::SampleSet val;
  data::SampleSet test;

  ~TinyCorpus() {
    std::error_code ec;
    std::filesystem::remove_all(root, ec);
  }
};

inline const TinyCorpus& tiny_corpus() {
  static const std::unique_ptr<TinyCorpus> corpus = [] {
    auto c = std::make_unique<TinyCorpus>();
    std::random_device rd;
    c->root = std::filesystem::temp_directory_path() / ("dtc_tiny_" + std::to_string(rd()));
    c->manifest = data::build_dataset(60, c->root, 3);
    const std::vector<data::DatasetManifest> ms = {c->manifest};
    c->vocab = text::build_vocab(ms);
    c->config = preset_config("tiny");
    auto load = [&](data::Split s) {
      return data::load_split(c->manifest, s, c->vocab, c->config.resolution, static_cast<int>(c->config.max_tokens),
                              static_cast<int>(c->config.scene_max_tokens));
    };
    c->train = load(data::Split::train);
    c->val = load(data::Split::val);
    c->test = load(data::Split::test);
    return c;
  }();
  return *corpus;
}

}  // namespace dtc::testing
