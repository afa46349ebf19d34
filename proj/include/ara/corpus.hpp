// Copyright 2026 The ARA Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ara {

// Byte-level tokenizer over the distinct bytes of a corpus. Id 0 is
// reserved for bytes never seen when the vocabulary was built.
class Tokenizer {
 public:
  Tokenizer() = default;
  explicit Tokenizer(std::vector<std::uint8_t> alphabet);
  static Tokenizer from_text(std::string_view text);

  std::vector<int> encode(std::string_view text) const;
  std::string decode(std::span<const int> ids) const;

  std::size_t vocab_size() const { return alphabet_.size() + 1; }
  const std::vector<std::uint8_t>& alphabet() const { return alphabet_; }

 private:
  std::vector<std::uint8_t> alphabet_;
  std::vector<int> lookup_ = std::vector<int>(256, 0);
};

// Token stream split into a training prefix and a held-out suffix.
struct Corpus {
  std::vector<int> train;
  std::vector<int> heldout;
};

Corpus split_corpus(std::vector<int> tokens, double heldout_fraction = 0.1);

std::string read_text_file(const std::string& path);

// Start offsets of the non-overlapping windows of seq_len + 1 tokens
// (inputs plus the shifted targets) that fit inside `tokens`.
std::vector<std::size_t> window_starts(std::size_t token_count, std::size_t seq_len);

// Deterministic English-like prose: sentences from a small grammar with
// Zipf-weighted word choice, punctuation and paragraph breaks.
std::string synthesize_corpus(std::size_t bytes, std::uint64_t seed);

}  // namespace ara
