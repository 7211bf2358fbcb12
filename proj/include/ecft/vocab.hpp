// Copyright 2026 The ECFT Authors
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

#ifndef ECFT_VOCAB_HPP
#define ECFT_VOCAB_HPP

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace ecft {

using Token = int;
using Sentence = std::vector<Token>;
using LangId = int;

enum class ResourceTier { kHigh, kLow };

inline std::string to_string(ResourceTier t) { return t == ResourceTier::kHigh ? "high" : "low"; }

inline ResourceTier tier_from_string(const std::string& s) {
  if (s == "high") return ResourceTier::kHigh;
  if (s == "low") return ResourceTier::kLow;
  throw std::invalid_argument("unknown resource tier: " + s);
}

struct LanguageInfo {
  LangId id = 0;
  std::string name;
  Token control_token = 0;
  Token content_begin = 0;
  int content_size = 0;
  ResourceTier tier = ResourceTier::kHigh;

  bool owns(Token t) const { return t >= content_begin && t < content_begin + content_size; }
  bool operator==(const LanguageInfo&) const = default;
};

/// Shared token space: five reserved specials, one control token per
/// language, one contiguous content block per language, then an optional
/// block of tokens every language may use (numerals, names and other
/// strings a joint subword inventory shares across languages).
class Vocabulary {
 public:
  static constexpr Token kPad = 0;
  static constexpr Token kBos = 1;
  static constexpr Token kEos = 2;
  static constexpr Token kMask = 3;
  static constexpr Token kCls = 4;
  static constexpr int kNumReserved = 5;

  Vocabulary() = default;

  /// Builds the layout for languages given as (name, content size, tier).
  static Vocabulary build(const std::vector<std::string>& names, const std::vector<int>& content_sizes,
                          const std::vector<ResourceTier>& tiers, int shared_size = 0) {
    if (names.size() != content_sizes.size() || names.size() != tiers.size())
      throw std::invalid_argument("Vocabulary::build: argument length mismatch");
    if (shared_size < 0) throw std::invalid_argument("Vocabulary::build: negative shared block size");
    Vocabulary v;
    Token next = kNumReserved + static_cast<Token>(names.size());
    for (std::size_t i = 0; i < names.size(); ++i) {
      LanguageInfo li;
      li.id = static_cast<LangId>(i);
      li.name = names[i];
      li.control_token = kNumReserved + static_cast<Token>(i);
      li.content_begin = next;
      li.content_size = content_sizes[i];
      li.tier = tiers[i];
      next += content_sizes[i];
      v.langs_.push_back(li);
    }
    v.shared_begin_ = next;
    v.shared_size_ = shared_size;
    v.size_ = next + shared_size;
    return v;
  }

  int size() const { return size_; }
  int num_languages() const { return static_cast<int>(langs_.size()); }
  const std::vector<LanguageInfo>& languages() const { return langs_; }

  const LanguageInfo& language(LangId id) const {
    if (id < 0 || id >= num_languages()) throw std::out_of_range("unknown language id " + std::to_string(id));
    return langs_[static_cast<std::size_t>(id)];
  }

  LangId find(const std::string& name) const {
    for (const auto& l : langs_)
      if (l.name == name) return l.id;
    throw std::out_of_range("unknown language name: " + name);
  }

  Token control_token(LangId id) const { return language(id).control_token; }

  bool is_special(Token t) const { return t >= 0 && t < kNumReserved + num_languages(); }
  bool is_control(Token t) const { return t >= kNumReserved && t < kNumReserved + num_languages(); }
  bool in_range(Token t) const { return t >= 0 && t < size_; }

  Token shared_begin() const { return shared_begin_; }
  int shared_size() const { return shared_size_; }
  bool is_shared(Token t) const { return t >= shared_begin_ && t < shared_begin_ + shared_size_; }
  /// Content token a sentence of language `id` may contain.
  bool usable_by(Token t, LangId id) const { return language(id).owns(t) || is_shared(t); }

  /// Language owning a content token, or -1 for specials and shared tokens.
  LangId language_of(Token t) const {
    for (const auto& l : langs_)
      if (l.owns(t)) return l.id;
    return -1;
  }

  void check_sentence(const Sentence& s) const {
    for (Token t : s)
      if (!in_range(t)) throw std::out_of_range("token id out of vocabulary: " + std::to_string(t));
  }

  bool operator==(const Vocabulary&) const = default;

 private:
  std::vector<LanguageInfo> langs_;
  Token shared_begin_ = kNumReserved;
  int shared_size_ = 0;
  int size_ = kNumReserved;
};

}  // namespace ecft

#endif  // ECFT_VOCAB_HPP
