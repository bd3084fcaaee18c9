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
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

namespace dtc::data {
struct DatasetManifest;
}

namespace dtc::text {

inline constexpr std::int64_t kPad = 0;
inline constexpr std::int64_t kUnk = 1;
inline constexpr std::int64_t kBos = 2;
inline constexpr std::int64_t kEos = 3;
inline constexpr int kDefaultMaxTokens = 16;

std::string to_lower(std::string_view s);
std::vector<std::string> split_whitespace(std::string_view s);

class Vocabulary {
 public:
  Vocabulary();

  /// Collects lowercased whitespace tokens; special tokens take ids 0-3.
  static Vocabulary from_captions(std::span<const std::string> captions);

  std::int64_t id(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::string& token(std::int64_t id) const;
  std::int64_t size() const { return static_cast<std::int64_t>(tokens_.size()); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  nlohmann::json to_json() const;
  static Vocabulary from_json(const nlohmann::json& j);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::int64_t> ids_;
};

/// Vocabulary over every caption of every split of the given datasets.
Vocabulary build_vocab(std::span<const data::DatasetManifest> manifests);

struct TokenSeq {
  std::vector<std::int64_t> ids;  // length max_tokens, PAD-filled
  int valid_length = 0;           // BOS..EOS inclusive
};

/// BOS/EOS-wrapped ids padded or truncated to max_tokens. Words outside the
/// vocabulary become UNK and are appended to `unknown` when given.
TokenSeq tokenize(std::string_view caption, const Vocabulary& vocab, int max_tokens = kDefaultMaxTokens,
                  std::vector<std::string>* unknown = nullptr);

/// Space-joined words between BOS and EOS.
std::string detokenize(const TokenSeq& seq, const Vocabulary& vocab);

/// Stacks sequences into ids [B, T] and lengths [B] (int64).
std::pair<torch::Tensor, torch::Tensor> batch_tokens(std::span<const TokenSeq> seqs);

struct TextEncoding {
  torch::Tensor words;     // [B, T, word_dim], zero at PAD positions
  torch::Tensor sentence;  // [B, embed_dim]
  torch::Tensor mask;      // [B, T] bool, true for valid positions
};

struct TextEncoderOptions {
  std::int64_t vocab_size = 0;
  std::int64_t word_dim = 128;
  std::int64_t embed_dim = 128;
};

/// Embedding table, bidirectional GRU over the valid prefix, masked mean
/// pooled and projected to the sentence embedding.
class TextEncoderImpl : public torch::nn::Module {
 public:
  explicit TextEncoderImpl(const TextEncoderOptions& options);

  TextEncoding forward(const torch::Tensor& ids, const torch::Tensor& lengths);

  const TextEncoderOptions& options() const { return options_; }

 private:
  TextEncoderOptions options_;
  torch::nn::Embedding embedding_{nullptr};
  torch::nn::GRU gru_{nullptr};
  torch::nn::Linear project_{nullptr};
};
TORCH_MODULE(TextEncoder);

}  // namespace dtc::text
