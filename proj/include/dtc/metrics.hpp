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

#include "dtc/batch.hpp"
#include "dtc/evaluator.hpp"
#include "dtc/models.hpp"

namespace dtc::eval {

/// Held-out region/caption retrieval: each real region crop ranks its own
/// caption against n-1 distractor captions by word + sentence match score.
double damsm_retrieval_top1(Models& models, const data::SampleSet& split, std::int64_t n_candidates,
                            std::uint64_t seed);

/// One generated image per sample of the split, latents derived from (seed, index).
torch::Tensor generate_split(Models& models, const data::SampleSet& split, std::uint64_t seed);

/// Oracle accuracy on single-object regions of `images` (laid out as `split`),
/// scored against the attributes stated in each caption.
AttributeAccuracy region_attribute_accuracy(Models& models, const torch::Tensor& images,
                                            const data::SampleSet& split);

/// Whole-image global vector vs full scene description; the true
/// description competes with n-1 descriptions of other samples.
double r_precision(Models& models, const torch::Tensor& images, const data::SampleSet& split,
                   std::int64_t n_candidates, std::uint64_t seed);

/// Same ranking with scores from a caller-supplied scorer [N images, N texts].
double r_precision_with(const torch::Tensor& scores, const data::SampleSet& split, std::int64_t n_candidates,
                        std::uint64_t seed);

/// Uniform noise in [-1, 1] shaped like `like`.
torch::Tensor uniform_noise_images(const torch::Tensor& like, std::uint64_t seed);

/// Full report for the generator in `models` on one split.
MetricsReport evaluate(Models& models, const data::SampleSet& split, std::uint64_t seed,
                       std::int64_t n_candidates = 10);

}  // namespace dtc::eval
