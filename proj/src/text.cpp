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

#include "dtc/text.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <stdexcept>

#include "dtc/dataset.hpp"

namespace dtc::text {

namespace {
const std::vector<std::string> kSpecials = {"<pad>", "<unk>", "<bos>", "<eos>"};
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

std::vector<std::string> split_whitespace(std::string_view s) {
  std::vector<std::string> words;
  std::size_t pos = 0;
  while (pos < s.size()) {
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    const std::size_t start = pos;
    while (pos < s.size() && !std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    if (pos > start) words.emplace_back(s.substr(start, pos - start));
  }
  return words;
}

Vocabulary::Vocabulary() : tokens_(kSpecials) {
  for (std::size_t i = 0; i < tokens_.size(); ++i) ids_.emplace(tokens_[i], static_cast<std::int64_t>(i));
}

Vocabulary Vocabulary::from_captions(std::span<const std::string> captions) {
  std::set<std::string> words;
  for (const auto& c : captions) {
    for (auto& w : split_whitespace(to_lower(c))) words.insert(std::move(w));
  }
  if (words.empty()) throw std::invalid_argument("build_vocab: empty corpus");
  Vocabulary v;
  for (const auto& w : words) {
    if (v.ids_.contains(w)) continue;
    v.ids_.emplace(w, v.size());
    v.tokens_.push_back(w);
  }
  return v;
}

std::int64_t Vocabulary::id(std::string_view token) const {
  auto it = ids_.find(to_lower(token));
  return it == ids_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const { return ids_.contains(to_lower(token)); }

const std::string& Vocabulary::token(std::int64_t id) const {
  if (id < 0 || id >= size()) throw std::out_of_range("Vocabulary::token: id " + std::to_string(id));
  return tokens_[static_cast<std::size_t>(id)];
}

nlohmann::json Vocabulary::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (std::size_t i = 0; i < tokens_.size(); ++i) j[tokens_[i]] = i;
  return j;
}

Vocabulary Vocabulary::from_json(const nlohmann::json& j) {
  std::vector<std::string> tokens(j.size());
  for (const auto& [tok, id] : j.items()) {
    const auto i = id.get<std::int64_t>();
    if (i < 0 || i >= static_cast<std::int64_t>(tokens.size()) || !tokens[i].empty()) {
      throw std::runtime_error("Vocabulary::from_json: ids must be dense and unique");
    }
    tokens[i] = tok;
  }
  for (std::size_t i = 0; i < kSpecials.size(); ++i) {
    if (tokens.size() <= i || tokens[i] != kSpecials[i]) {
      throw std::runtime_error("Vocabulary::from_json: special tokens must occupy ids 0-3");
    }
  }
  Vocabulary v;
  v.tokens_ = std::move(tokens);
  v.ids_.clear();
  for (std::size_t i = 0; i < v.tokens_.size(); ++i) v.ids_.emplace(v.tokens_[i], static_cast<std::int64_t>(i));
  return v;
}

Vocabulary build_vocab(std::span<const data::DatasetManifest> manifests) {
  if (manifests.empty()) throw std::invalid_argument("build_vocab: no manifests");
  std::vector<std::string> captions;
  for (const auto& m : manifests) {
    for (const auto& [_, recs] : m.splits) {
      for (const auto& rec : recs) {
        for (const auto& r : rec.layout.regions) captions.push_back(r.caption);
      }
    }
  }
  return Vocabulary::from_captions(captions);
}

TokenSeq tokenize(std::string_view caption, const Vocabulary& vocab, int max_tokens,
                  std::vector<std::string>* unknown) {
  if (max_tokens < 3) throw std::invalid_argument("tokenize: max_tokens must be >= 3");
  const auto words = split_whitespace(to_lower(caption));
  if (words.empty()) throw std::invalid_argument("tokenize: empty caption");
  TokenSeq seq;
  seq.ids.assign(static_cast<std::size_t>(max_tokens), kPad);
  const std::size_t n_words = std::min(words.size(), static_cast<std::size_t>(max_tokens - 2));
  seq.ids[0] = kBos;
  for (std::size_t i = 0; i < n_words; ++i) {
    const std::int64_t id = vocab.id(words[i]);
    if (id == kUnk && unknown) unknown->push_back(words[i]);
    seq.ids[i + 1] = id;
  }
  seq.ids[n_words + 1] = kEos;
  seq.valid_length = static_cast<int>(n_words + 2);
  return seq;
}

std::string detokenize(const TokenSeq& seq, const Vocabulary& vocab) {
  std::string out;
  for (int i = 0; i < seq.valid_length; ++i) {
    const std::int64_t id = seq.ids[static_cast<std::size_t>(i)];
    if (id == kBos || id == kEos || id == kPad) continue;
    if (!out.empty()) out += ' ';
    out += vocab.token(id);
  }
  return out;
}

std::pair<torch::Tensor, torch::Tensor> batch_tokens(std::span<const TokenSeq> seqs) {
  if (seqs.empty()) throw std::invalid_argument("batch_tokens: empty batch");
  const auto t = static_cast<std::int64_t>(seqs.front().ids.size());
  auto ids = torch::empty({static_cast<std::int64_t>(seqs.size()), t}, torch::kInt64);
  auto lengths = torch::empty({static_cast<std::int64_t>(seqs.size())}, torch::kInt64);
  auto ids_a = ids.accessor<std::int64_t, 2>();
  auto len_a = lengths.accessor<std::int64_t, 1>();
  for (std::size_t b = 0; b < seqs.size(); ++b) {
    if (static_cast<std::int64_t>(seqs[b].ids.size()) != t) {
      throw std::invalid_argument("batch_tokens: sequences must share one length");
    }
    for (std::int64_t i = 0; i < t; ++i) ids_a[b][i] = seqs[b].ids[static_cast<std::size_t>(i)];
    len_a[b] = seqs[b].valid_length;
  }
  return {ids, lengths};
}

TextEncoderImpl::TextEncoderImpl(const TextEncoderOptions& options) : options_(options) {
  if (options.vocab_size <= 4) throw std::invalid_argument("TextEncoder: vocab_size must exceed the specials");
  if (options.word_dim % 2 != 0) throw std::invalid_argument("TextEncoder: word_dim must be even");
  embedding_ = register_module("embedding", torch::nn::Embedding(options.vocab_size, options.word_dim));
  gru_ = register_module("gru", torch::nn::GRU(torch::nn::GRUOptions(options.word_dim, options.word_dim / 2)
                                                   .batch_first(true)
                                                   .bidirectional(true)));
  project_ = register_module("project", torch::nn::Linear(options.word_dim, options.embed_dim));
}

TextEncoding TextEncoderImpl::forward(const torch::Tensor& ids, const torch::Tensor& lengths) {
  TORCH_CHECK(ids.dim() == 2, "TextEncoder: ids must be [B, T]");
  TORCH_CHECK(lengths.dim() == 1 && lengths.size(0) == ids.size(0), "TextEncoder: lengths must be [B]");
  const auto max_id = ids.max().item<std::int64_t>();
  TORCH_CHECK(max_id < options_.vocab_size, "TextEncoder: token id ", max_id, " >= vocabulary size ",
              options_.vocab_size);
  TORCH_CHECK(ids.min().item<std::int64_t>() >= 0, "TextEncoder: negative token id");
  const auto t = ids.size(1);
  const auto positions = torch::arange(t, torch::kInt64).unsqueeze(0);
  const auto mask = positions < lengths.unsqueeze(1);

  // Only the valid prefix reaches the recurrent layer, so PAD content cannot leak.
  auto embedded = embedding_(ids.masked_fill(~mask, kPad));
  auto packed = torch::nn::utils::rnn::pack_padded_sequence(embedded, lengths.to(torch::kCPU), true, false);
  auto [out_packed, hidden] = gru_->forward_with_packed_input(packed);
  auto [words, out_lengths] =
      torch::nn::utils::rnn::pad_packed_sequence(out_packed, true, 0.0, t);
  const auto maskf = mask.to(words.dtype()).unsqueeze(2);
  words = words * maskf;
  const auto pooled = words.sum(1) / maskf.sum(1).clamp_min(1.0);
  return {words, project_(pooled), mask};
}

}  // namespace dtc::text
