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
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>

#include "dtc/batch.hpp"
#include "dtc/models.hpp"

namespace dtc::train {

/// A loss term became NaN or infinite.
class NonFiniteLoss : public std::runtime_error {
 public:
  NonFiniteLoss(const std::string& term, std::int64_t step);
  const std::string& term() const { return term_; }

 private:
  std::string term_;
};

/// Resuming a checkpoint written under a different config.
class ConfigMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct StepLog {
  std::string phase;
  std::int64_t step = 0;  // 1-based count of completed steps
  std::int64_t epoch = 0;
  std::map<std::string, double> values;
};

struct RunOptions {
  std::filesystem::path checkpoint_path;         // written at cadence and at the end; empty: never
  std::optional<std::filesystem::path> resume;   // checkpoint of the same phase to continue from
  std::int64_t stop_after = 0;                   // >0: stop (and save) after this many total steps
  std::function<void(const StepLog&)> on_step;
};

struct PhaseResult {
  std::int64_t steps = 0;
  std::int64_t epochs_completed = 0;
  std::map<std::string, double> last;
};

std::int64_t steps_per_epoch(std::int64_t samples, std::int64_t batch_size);

/// Fits the attribute oracle on single-object windows of `train` and
/// returns per-attribute accuracy on `val`. The oracle is frozen afterwards.
eval::AttributeAccuracy train_oracle(Models& models, const data::SampleSet& train, const data::SampleSet& val,
                                     const std::function<void(const StepLog&)>& on_step = {});

/// DAMSM loss on region crops (plus whole-image/full-description pairs when
/// config.damsm_scene_pairs) for one batch.
torch::Tensor damsm_batch_loss(Models& models, const data::Batch& batch);

/// Joint training of the text and region-crop encoders; both are frozen
/// afterwards.
PhaseResult pretrain_damsm(Models& models, const data::SampleSet& train, const RunOptions& run);

/// Adversarial training with 1:1 D/G updates. Requires trained text and
/// image encoders (and the oracle when the perceptual weight is non-zero).
PhaseResult train_gan(Models& models, const data::SampleSet& train, const RunOptions& run);

}  // namespace dtc::train
