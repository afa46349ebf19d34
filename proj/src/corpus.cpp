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

#include "ara/corpus.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

#include "ara/error.hpp"
#include "ara/rng.hpp"

namespace ara {

Tokenizer::Tokenizer(std::vector<std::uint8_t> alphabet) : alphabet_(std::move(alphabet)) {
  std::sort(alphabet_.begin(), alphabet_.end());
  alphabet_.erase(std::unique(alphabet_.begin(), alphabet_.end()), alphabet_.end());
  for (std::size_t i = 0; i < alphabet_.size(); ++i) lookup_[alphabet_[i]] = static_cast<int>(i + 1);
}

Tokenizer Tokenizer::from_text(std::string_view text) {
  std::array<bool, 256> seen{};
  for (char c : text) seen[static_cast<std::uint8_t>(c)] = true;
  std::vector<std::uint8_t> alphabet;
  for (int b = 0; b < 256; ++b)
    if (seen[b]) alphabet.push_back(static_cast<std::uint8_t>(b));
  return Tokenizer(std::move(alphabet));
}

std::vector<int> Tokenizer::encode(std::string_view text) const {
  std::vector<int> ids;
  ids.reserve(text.size());
  for (char c : text) ids.push_back(lookup_[static_cast<std::uint8_t>(c)]);
  return ids;
}

std::string Tokenizer::decode(std::span<const int> ids) const {
  std::string out;
  out.reserve(ids.size());
  for (int id : ids) {
    out.push_back(id >= 1 && static_cast<std::size_t>(id) <= alphabet_.size()
                      ? static_cast<char>(alphabet_[id - 1])
                      : '?');
  }
  return out;
}

Corpus split_corpus(std::vector<int> tokens, double heldout_fraction) {
  if (tokens.empty()) throw InputError("split_corpus: empty corpus");
  const auto cut = static_cast<std::size_t>(
      std::floor(static_cast<double>(tokens.size()) * (1.0 - heldout_fraction)));
  Corpus c;
  c.heldout.assign(tokens.begin() + cut, tokens.end());
  tokens.resize(cut);
  c.train = std::move(tokens);
  return c;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::size_t> window_starts(std::size_t token_count, std::size_t seq_len) {
  std::vector<std::size_t> starts;
  const std::size_t span = seq_len + 1;
  for (std::size_t s = 0; s + span <= token_count; s += span) starts.push_back(s);
  return starts;
}

namespace {

// Zipf-weighted pick from a word list.
class Lexicon {
 public:
  explicit Lexicon(std::vector<std::string> words) : words_(std::move(words)) {
    double total = 0.0;
    for (std::size_t i = 0; i < words_.size(); ++i) {
      total += 1.0 / std::pow(static_cast<double>(i + 1), 1.1);
      cdf_.push_back(total);
    }
    for (double& c : cdf_) c /= total;
  }

  const std::string& pick(Rng& rng) const {
    const double u = rng.uniform();
    const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    return words_[std::min<std::size_t>(it - cdf_.begin(), words_.size() - 1)];
  }

 private:
  std::vector<std::string> words_;
  std::vector<double> cdf_;
};

// Pronounceable pseudo-words from a fixed syllable inventory. The
// generator seed is constant so every corpus shares one vocabulary.
std::vector<std::string> pseudo_words(std::size_t count, std::uint64_t salt,
                                      std::vector<std::string> seed_words) {
  static const char* const kOnsets[] = {"b",  "br", "c", "ch", "d",  "dr", "f",  "fl", "g", "gr",
                                        "h",  "j",  "k", "l",  "m",  "n",  "p",  "pl", "r", "s",
                                        "sh", "st", "t", "th", "tr", "v",  "w",  "z",  "",  "sc"};
  static const char* const kVowels[] = {"a", "e", "i", "o", "u", "ai", "ea", "ou", "oo", "ie"};
  static const char* const kCodas[] = {"", "", "n", "r", "l", "s", "t", "m", "nd", "rk", "st", "ng"};
  Rng rng(0x1e81c0ull ^ salt);
  std::vector<std::string> words = std::move(seed_words);
  while (words.size() < count) {
    std::string w;
    const std::size_t syllables = 1 + rng.below(3);
    for (std::size_t i = 0; i < syllables; ++i) {
      w += kOnsets[rng.below(std::size(kOnsets))];
      w += kVowels[rng.below(std::size(kVowels))];
      w += kCodas[rng.below(std::size(kCodas))];
    }
    if (w.size() >= 3 && std::find(words.begin(), words.end(), w) == words.end()) {
      words.push_back(std::move(w));
    }
  }
  return words;
}

std::string capitalized(std::string w) {
  w[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(w[0])));
  return w;
}

struct Grammar {
  Lexicon determiners{{"the", "a", "this", "every", "that", "some", "no", "each"}};
  Lexicon adjectives{pseudo_words(
      160, 1,
      {"old", "small", "quiet", "bright", "heavy", "strange", "green", "cold", "gentle", "broken",
       "distant", "narrow", "golden", "patient", "early", "hollow", "silver", "restless",
       "careful", "ancient"})};
  Lexicon nouns{pseudo_words(
      400, 2,
      {"river", "village", "man", "woman", "child", "house", "road", "garden", "letter",
       "window", "mountain", "ship", "teacher", "farmer", "market", "bridge", "forest", "lamp",
       "stone", "winter", "king", "horse", "clock", "doctor", "question", "story", "morning",
       "island", "machine", "friend"})};
  Lexicon verbs{with_suffix(
      pseudo_words(160, 3,
                   {"saw", "found", "carried", "remembered", "opened", "followed", "built",
                    "watched", "heard", "left", "painted", "crossed", "answered", "kept",
                    "described", "measured", "repaired", "visited", "lost", "named"}),
      20, "ed")};
  Lexicon intransitive{{"slept", "waited", "laughed", "arrived", "vanished", "returned",
                        "listened", "wandered", "stayed", "trembled"}};
  Lexicon adverbs{{"slowly", "again", "quietly", "at last", "once more", "without a word",
                   "before dawn", "in the rain", "for a while", "every evening"}};
  Lexicon prepositions{{"near", "beyond", "under", "behind", "across", "beside", "through"}};
  Lexicon connectives{{"and", "but", "so", "while", "because", "until"}};
  Lexicon names{capitalize_all(pseudo_words(
      48, 4, {"anna", "tomas", "mira", "elias", "clara", "jonah", "ruth", "oskar"}))};

  static std::vector<std::string> with_suffix(std::vector<std::string> words, std::size_t from,
                                              const std::string& suffix) {
    for (std::size_t i = from; i < words.size(); ++i) words[i] += suffix;
    return words;
  }
  static std::vector<std::string> capitalize_all(std::vector<std::string> words) {
    for (auto& w : words) w = capitalized(std::move(w));
    return words;
  }
};

std::string noun_phrase(const Grammar& g, Rng& rng) {
  if (rng.uniform() < 0.15) return g.names.pick(rng);
  std::string np = g.determiners.pick(rng);
  if (rng.uniform() < 0.45) np += " " + g.adjectives.pick(rng);
  np += " " + g.nouns.pick(rng);
  if (rng.uniform() < 0.2) np += " " + g.prepositions.pick(rng) + " the " + g.nouns.pick(rng);
  return np;
}

std::string clause(const Grammar& g, Rng& rng) {
  std::string c = noun_phrase(g, rng);
  if (rng.uniform() < 0.3) {
    c += " " + g.intransitive.pick(rng);
  } else {
    c += " " + g.verbs.pick(rng) + " " + noun_phrase(g, rng);
  }
  if (rng.uniform() < 0.35) c += " " + g.adverbs.pick(rng);
  return c;
}

std::string sentence(const Grammar& g, Rng& rng) {
  std::string s = clause(g, rng);
  if (rng.uniform() < 0.4) s += ", " + g.connectives.pick(rng) + " " + clause(g, rng);
  s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  const double u = rng.uniform();
  s += u < 0.8 ? "." : (u < 0.9 ? "?" : "!");
  return s;
}

}  // namespace

std::string synthesize_corpus(std::size_t bytes, std::uint64_t seed) {
  Rng rng(seed);
  const Grammar g;
  std::string out;
  out.reserve(bytes + 256);
  std::size_t in_paragraph = 0;
  while (out.size() < bytes) {
    out += sentence(g, rng);
    if (++in_paragraph >= 3 + rng.below(5)) {
      out += "\n\n";
      in_paragraph = 0;
    } else {
      out += ' ';
    }
  }
  out.resize(bytes);
  return out;
}

}  // namespace ara
