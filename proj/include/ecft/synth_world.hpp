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

// Synthetic languages, corpora and the attribute image world.
//
// Every language in a family renders the same latent concept sequences: a
// concept stream is drawn from a Zipfian unigram law, each concept is spelled
// with the language's own token (a seeded permutation of its content block),
// and the result is reordered by the language's reorder rule. Translation
// between two members is therefore a token bijection plus a permutation, and
// is only ever computed by oracle_translate at evaluation time.

#ifndef ECFT_SYNTH_WORLD_HPP
#define ECFT_SYNTH_WORLD_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "ecft/vocab.hpp"

namespace ecft {

inline constexpr int kMinContentVocab = 8;

/// Deterministic permutation applied to a whole sentence. Rotations split the
/// sentence at a boundary and swap the two blocks.
struct ReorderRule {
  enum class Kind { kIdentity, kSwapHalves, kRotate, kReverse };
  Kind kind = Kind::kIdentity;
  int block = 1;  // split point for kRotate

  static ReorderRule identity() { return {}; }
  static ReorderRule swap_halves() { return {Kind::kSwapHalves, 0}; }
  static ReorderRule rotate(int k) { return {Kind::kRotate, k}; }
  static ReorderRule reverse() { return {Kind::kReverse, 0}; }

  Sentence apply(const Sentence& s) const { return permute(s, false); }
  Sentence invert(const Sentence& s) const { return permute(s, true); }

  std::string name() const {
    switch (kind) {
      case Kind::kIdentity: return "identity";
      case Kind::kSwapHalves: return "swap_halves";
      case Kind::kRotate: return "rotate:" + std::to_string(block);
      case Kind::kReverse: return "reverse";
    }
    return "identity";
  }

  static ReorderRule parse(const std::string& s) {
    if (s == "identity") return identity();
    if (s == "swap_halves") return swap_halves();
    if (s == "reverse") return reverse();
    if (s.rfind("rotate:", 0) == 0) return rotate(std::stoi(s.substr(7)));
    throw std::invalid_argument("unknown reorder rule: " + s);
  }

  bool operator==(const ReorderRule&) const = default;

 private:
  Sentence permute(const Sentence& s, bool inverse) const {
    const int n = static_cast<int>(s.size());
    if (n == 0) return s;
    switch (kind) {
      case Kind::kIdentity: return s;
      case Kind::kReverse: return Sentence(s.rbegin(), s.rend());
      case Kind::kSwapHalves:
      case Kind::kRotate: {
        int split = kind == Kind::kSwapHalves ? n / 2 : std::min(std::max(block, 0), n);
        if (inverse) split = n - split;
        Sentence out(s.begin() + split, s.end());
        out.insert(out.end(), s.begin(), s.begin() + split);
        return out;
      }
    }
    return s;
  }
};

/// Shared latent sentence law: length uniform in [min_len, max_len]; the
/// first concept is drawn from a Zipfian law whose rank order is a seeded
/// permutation, each later one follows the previous concept's successor list
/// with probability `markov_strength` and is otherwise redrawn from the
/// Zipfian law.
struct LatentGrammar {
  std::vector<double> concept_probs;
  std::vector<std::vector<int>> successors;
  std::vector<double> successor_weights;
  double markov_strength = 0.0;
  int min_len = 3;
  int max_len = 12;

  bool operator==(const LatentGrammar&) const = default;

  std::vector<int> sample(std::mt19937_64& rng) const {
    std::uniform_int_distribution<int> len_dist(min_len, max_len);
    std::discrete_distribution<int> concept_dist(concept_probs.begin(), concept_probs.end());
    std::discrete_distribution<int> succ_dist(successor_weights.begin(), successor_weights.end());
    std::bernoulli_distribution follow(markov_strength);
    const int n = len_dist(rng);
    std::vector<int> out(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      if (i > 0 && !successors.empty() && follow(rng))
        out[i] = successors[static_cast<std::size_t>(out[i - 1])][static_cast<std::size_t>(succ_dist(rng))];
      else
        out[i] = concept_dist(rng);
    }
    return out;
  }

  /// Concepts ordered by descending probability.
  std::vector<int> frequency_order() const {
    std::vector<int> idx(concept_probs.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](int a, int b) { return concept_probs[a] > concept_probs[b]; });
    return idx;
  }
};

struct SamplerConfig {
  double zipf_exponent = 1.0;
  int min_len = 3;
  int max_len = 12;
  double markov_strength = 0.7;
  int num_successors = 3;
};

enum class Direction { kAtoB, kBtoA };

struct LanguagePairSpec {
  LangId lang_a_id = 0;
  LangId lang_b_id = 1;
  Token a_begin = 0;
  Token b_begin = 0;
  /// Size of each member's own content block.
  int content_size = 0;
  /// Tokens both members spell identically; they translate to themselves.
  Token shared_begin = 0;
  int shared_size = 0;
  /// lexicon[i] is the B token for A token a_begin + i.
  std::vector<Token> lexicon;
  std::vector<Token> inverse_lexicon;
  /// Spelling of each latent concept in language A (own or shared token).
  std::vector<Token> a_concept_tokens;
  ReorderRule reorder;
  LatentGrammar grammar;
  std::uint64_t seed = 0;

  bool is_shared(Token t) const { return t >= shared_begin && t < shared_begin + shared_size; }
  bool in_a(Token t) const { return (t >= a_begin && t < a_begin + content_size) || is_shared(t); }
  bool in_b(Token t) const { return (t >= b_begin && t < b_begin + content_size) || is_shared(t); }
  int num_concepts() const { return static_cast<int>(a_concept_tokens.size()); }
  LangId source_of(Direction d) const { return d == Direction::kAtoB ? lang_a_id : lang_b_id; }
  LangId target_of(Direction d) const { return d == Direction::kAtoB ? lang_b_id : lang_a_id; }

  bool operator==(const LanguagePairSpec&) const = default;
};

/// A vocabulary plus pairs linking a pivot language to every other member.
struct LanguageFamily {
  Vocabulary vocab;
  LangId pivot = 0;
  std::vector<LanguagePairSpec> pairs;

  const LanguagePairSpec& pair_for(LangId other) const {
    for (const auto& p : pairs)
      if (p.lang_b_id == other) return p;
    throw std::out_of_range("no pair for language " + std::to_string(other));
  }
};

namespace detail {

inline std::vector<Token> shuffled_block(Token begin, int n, std::mt19937_64& rng) {
  std::vector<Token> v(static_cast<std::size_t>(n));
  std::iota(v.begin(), v.end(), begin);
  std::shuffle(v.begin(), v.end(), rng);
  return v;
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  // splitmix64 over the combined value
  std::uint64_t z = a * 0x9E3779B97F4A7C15ULL + b + 0x632BE59BD9B4E019ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace detail

struct FamilyMember {
  std::string name;
  ResourceTier tier = ResourceTier::kHigh;
  ReorderRule reorder;  // relative to the pivot (ignored for the pivot)
};

/// Builds a family whose first member is the pivot. All members share the
/// latent grammar; spellings are independent seeded permutations, except for
/// `shared_concepts` randomly chosen concepts that every member spells with
/// the same token from the vocabulary's shared block.
inline LanguageFamily gen_language_family(std::uint64_t seed, int content_vocab_size,
                                          const std::vector<FamilyMember>& members,
                                          const SamplerConfig& sampler = {}, int shared_concepts = 0) {
  if (content_vocab_size < kMinContentVocab)
    throw std::invalid_argument("content_vocab_size must be at least " + std::to_string(kMinContentVocab));
  if (shared_concepts < 0 || content_vocab_size - shared_concepts < kMinContentVocab)
    throw std::invalid_argument("shared_concepts must leave at least " + std::to_string(kMinContentVocab) +
                                " language-specific concepts");
  if (members.size() < 2) throw std::invalid_argument("a language family needs at least two members");
  if (sampler.min_len < 1 || sampler.max_len < sampler.min_len)
    throw std::invalid_argument("invalid sentence length range");
  if (sampler.markov_strength < 0.0 || sampler.markov_strength > 1.0)
    throw std::invalid_argument("markov_strength must lie in [0, 1]");

  std::vector<std::string> names;
  std::vector<int> sizes;
  std::vector<ResourceTier> tiers;
  for (const auto& m : members) {
    names.push_back(m.name);
    sizes.push_back(content_vocab_size - shared_concepts);
    tiers.push_back(m.tier);
  }
  LanguageFamily fam;
  fam.vocab = Vocabulary::build(names, sizes, tiers, shared_concepts);
  fam.pivot = 0;

  std::mt19937_64 rng(detail::mix_seed(seed, 0x5EED));
  LatentGrammar grammar;
  grammar.min_len = sampler.min_len;
  grammar.max_len = sampler.max_len;
  grammar.concept_probs.resize(static_cast<std::size_t>(content_vocab_size));
  std::vector<int> rank(static_cast<std::size_t>(content_vocab_size));
  std::iota(rank.begin(), rank.end(), 0);
  std::shuffle(rank.begin(), rank.end(), rng);
  double z = 0;
  for (int c = 0; c < content_vocab_size; ++c) {
    const double w = 1.0 / std::pow(static_cast<double>(rank[c] + 1), sampler.zipf_exponent);
    grammar.concept_probs[c] = w;
    z += w;
  }
  for (double& p : grammar.concept_probs) p /= z;
  grammar.markov_strength = sampler.markov_strength;
  if (sampler.num_successors > 0) {
    std::uniform_int_distribution<int> any(0, content_vocab_size - 1);
    grammar.successors.resize(static_cast<std::size_t>(content_vocab_size));
    for (auto& row : grammar.successors)
      for (int k = 0; k < sampler.num_successors; ++k) row.push_back(any(rng));
    for (int k = 0; k < sampler.num_successors; ++k) grammar.successor_weights.push_back(1.0 / (k + 1));
  }

  std::vector<std::vector<Token>> spelling;
  for (const auto& l : fam.vocab.languages())
    spelling.push_back(detail::shuffled_block(l.content_begin, l.content_size, rng));
  if (shared_concepts > 0) {
    // Shared concepts take the shared tokens; the rest keep their own
    // spellings in order.
    std::vector<int> concepts(static_cast<std::size_t>(content_vocab_size));
    std::iota(concepts.begin(), concepts.end(), 0);
    std::shuffle(concepts.begin(), concepts.end(), rng);
    std::vector<Token> shared_tok(static_cast<std::size_t>(content_vocab_size), -1);
    for (int i = 0; i < shared_concepts; ++i)
      shared_tok[static_cast<std::size_t>(concepts[static_cast<std::size_t>(i)])] = fam.vocab.shared_begin() + i;
    for (auto& own : spelling) {
      std::vector<Token> full;
      std::size_t next = 0;
      for (int c = 0; c < content_vocab_size; ++c)
        full.push_back(shared_tok[static_cast<std::size_t>(c)] >= 0 ? shared_tok[static_cast<std::size_t>(c)] : own[next++]);
      own = std::move(full);
    }
  }

  const LanguageInfo& a = fam.vocab.language(0);
  for (std::size_t m = 1; m < members.size(); ++m) {
    const LanguageInfo& b = fam.vocab.language(static_cast<LangId>(m));
    LanguagePairSpec p;
    p.lang_a_id = a.id;
    p.lang_b_id = b.id;
    p.a_begin = a.content_begin;
    p.b_begin = b.content_begin;
    p.content_size = content_vocab_size - shared_concepts;
    p.shared_begin = fam.vocab.shared_begin();
    p.shared_size = shared_concepts;
    p.lexicon.assign(static_cast<std::size_t>(p.content_size), 0);
    p.inverse_lexicon.assign(static_cast<std::size_t>(p.content_size), 0);
    for (int c = 0; c < content_vocab_size; ++c) {
      const Token ta = spelling[0][c];
      const Token tb = spelling[m][c];
      if (p.is_shared(ta)) continue;
      p.lexicon[static_cast<std::size_t>(ta - a.content_begin)] = tb;
      p.inverse_lexicon[static_cast<std::size_t>(tb - b.content_begin)] = ta;
    }
    p.a_concept_tokens = spelling[0];
    p.reorder = members[m].reorder;
    p.grammar = grammar;
    p.seed = seed;
    fam.pairs.push_back(std::move(p));
  }
  return fam;
}

struct PairWithVocab {
  LanguagePairSpec pair;
  Vocabulary vocab;
};

/// Two-language family ("a", "b"), both high tier.
inline PairWithVocab gen_language_pair(std::uint64_t seed, int content_vocab_size, ReorderRule reorder,
                                       const SamplerConfig& sampler = {}, int shared_concepts = 0) {
  LanguageFamily fam = gen_language_family(seed, content_vocab_size,
                                           {{"a", ResourceTier::kHigh, {}}, {"b", ResourceTier::kHigh, reorder}},
                                           sampler, shared_concepts);
  return {fam.pairs[0], fam.vocab};
}

/// Token-wise lexicon mapping followed by the pair's reorder rule (A to B), or
/// the inverse permutation followed by the inverse mapping (B to A).
inline Sentence oracle_translate(const Sentence& sentence, const LanguagePairSpec& pair, Direction dir) {
  if (dir == Direction::kAtoB) {
    Sentence mapped;
    mapped.reserve(sentence.size());
    for (Token t : sentence) {
      if (!pair.in_a(t)) throw std::out_of_range("oracle_translate: token outside source inventory");
      mapped.push_back(pair.is_shared(t) ? t : pair.lexicon[static_cast<std::size_t>(t - pair.a_begin)]);
    }
    return pair.reorder.apply(mapped);
  }
  for (Token t : sentence)
    if (!pair.in_b(t)) throw std::out_of_range("oracle_translate: token outside source inventory");
  Sentence restored = pair.reorder.invert(sentence);
  for (Token& t : restored)
    if (!pair.is_shared(t)) t = pair.inverse_lexicon[static_cast<std::size_t>(t - pair.b_begin)];
  return restored;
}

struct MonolingualCorpus {
  LangId lang_id = 0;
  std::vector<Sentence> sentences;
  ResourceTier resource_tier = ResourceTier::kHigh;
};

struct TierSizes {
  int high = 50000;
  int low = 5000;
  int size_for(ResourceTier t) const { return t == ResourceTier::kHigh ? high : low; }
};

inline Sentence sample_sentence(const LanguagePairSpec& pair, LangId lang, std::mt19937_64& rng) {
  const std::vector<int> concepts = pair.grammar.sample(rng);
  Sentence a;
  a.reserve(concepts.size());
  for (int c : concepts) a.push_back(pair.a_concept_tokens[static_cast<std::size_t>(c)]);
  if (lang == pair.lang_a_id) return a;
  return oracle_translate(a, pair, Direction::kAtoB);
}

inline MonolingualCorpus gen_monolingual_corpus(const LanguagePairSpec& pair, LangId lang, int n,
                                                std::uint64_t seed,
                                                ResourceTier tier = ResourceTier::kHigh) {
  if (lang != pair.lang_a_id && lang != pair.lang_b_id)
    throw std::invalid_argument("gen_monolingual_corpus: language not in pair");
  if (n < 1) throw std::invalid_argument("gen_monolingual_corpus: n must be positive");
  std::mt19937_64 rng(detail::mix_seed(seed, 0xC0 + static_cast<std::uint64_t>(lang)));
  MonolingualCorpus c;
  c.lang_id = lang;
  c.resource_tier = tier;
  c.sentences.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) c.sentences.push_back(sample_sentence(pair, lang, rng));
  return c;
}

struct ParallelExample {
  Sentence src;
  Sentence ref;
};

/// Held-out parallel set produced by the oracle, for evaluation only. Pairs
/// with either side in `exclude` (e.g. the training corpora) are redrawn.
inline std::vector<ParallelExample> gen_parallel_set(const LanguagePairSpec& pair, Direction dir, int n,
                                                     std::uint64_t seed,
                                                     const std::set<Sentence>* exclude = nullptr) {
  std::mt19937_64 rng(detail::mix_seed(seed, 0xE7A1 + static_cast<std::uint64_t>(dir == Direction::kBtoA)));
  std::vector<ParallelExample> out;
  out.reserve(static_cast<std::size_t>(n));
  long long attempts = 0;
  while (static_cast<int>(out.size()) < n) {
    if (++attempts > 1000LL * n + 1000) throw std::runtime_error("gen_parallel_set: cannot find enough held-out sentences");
    Sentence src = sample_sentence(pair, pair.source_of(dir), rng);
    Sentence ref = oracle_translate(src, pair, dir);
    if (exclude != nullptr && (exclude->count(src) > 0 || exclude->count(ref) > 0)) continue;
    out.push_back({std::move(src), std::move(ref)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Image world

struct AttributeAxis {
  std::string name;
  int cardinality = 1;
};

struct WorldSpec {
  std::vector<AttributeAxis> attribute_axes;
  int feature_dim = 32;
  double jitter_sigma = 0.05;
  std::uint64_t seed = 0;
  LangId caption_lang = 0;
  /// caption_tokens[axis][value] spells that attribute value.
  std::vector<std::vector<Token>> caption_tokens;
  /// Row per one-hot attribute slot, feature_dim columns.
  std::vector<std::vector<double>> embedding;

  int num_tuples() const {
    int n = 1;
    for (const auto& a : attribute_axes) n *= a.cardinality;
    return n;
  }

  std::vector<int> tuple_at(int index) const {
    std::vector<int> t(attribute_axes.size());
    for (std::size_t i = attribute_axes.size(); i-- > 0;) {
      t[i] = index % attribute_axes[i].cardinality;
      index /= attribute_axes[i].cardinality;
    }
    return t;
  }

  int tuple_index(const std::vector<int>& t) const {
    int idx = 0;
    for (std::size_t i = 0; i < attribute_axes.size(); ++i) idx = idx * attribute_axes[i].cardinality + t[i];
    return idx;
  }

  /// The caption grammar: one token per axis, in axis order.
  Sentence caption(const std::vector<int>& attributes) const {
    Sentence s;
    for (std::size_t i = 0; i < attribute_axes.size(); ++i)
      s.push_back(caption_tokens[i][static_cast<std::size_t>(attributes[i])]);
    return s;
  }

  std::vector<double> features(const std::vector<int>& attributes) const {
    std::vector<double> f(static_cast<std::size_t>(feature_dim), 0.0);
    int slot = 0;
    for (std::size_t i = 0; i < attribute_axes.size(); ++i) {
      const auto& row = embedding[static_cast<std::size_t>(slot + attributes[i])];
      for (int j = 0; j < feature_dim; ++j) f[j] += row[j];
      slot += attribute_axes[i].cardinality;
    }
    std::mt19937_64 rng(detail::mix_seed(seed, 0xF00D + static_cast<std::uint64_t>(tuple_index(attributes))));
    std::normal_distribution<double> jitter(0.0, jitter_sigma);
    for (double& x : f) x += jitter(rng);
    return f;
  }
};

struct ImageRecord {
  int image_id = 0;
  std::vector<double> features;
  std::vector<int> attributes;
  Sentence gold_caption;
};

/// Builds a world whose attribute words are spelled in the pair's A language
/// (the high-resource caption language), drawn from its more frequent
/// concepts so they survive frequency masks in every language.
inline WorldSpec gen_world(std::uint64_t seed, const std::vector<AttributeAxis>& axes, int feature_dim,
                           const LanguagePairSpec& pair, double jitter_sigma = 0.05) {
  int total_values = 0;
  for (const auto& a : axes) {
    if (a.cardinality < 1) throw std::invalid_argument("attribute cardinality must be positive");
    total_values += a.cardinality;
  }
  if (feature_dim < static_cast<int>(axes.size()))
    throw std::invalid_argument("feature_dim must be at least the number of attribute axes");
  if (total_values > pair.num_concepts()) throw std::invalid_argument("not enough concepts for attribute words");

  WorldSpec w;
  w.attribute_axes = axes;
  w.feature_dim = feature_dim;
  w.jitter_sigma = jitter_sigma;
  w.seed = seed;
  w.caption_lang = pair.lang_a_id;

  std::mt19937_64 rng(detail::mix_seed(seed, 0xA77));
  std::vector<int> order = pair.grammar.frequency_order();
  const int pool = std::max(total_values, static_cast<int>(order.size()) * 2 / 5);
  std::vector<int> candidates(order.begin(), order.begin() + pool);
  std::shuffle(candidates.begin(), candidates.end(), rng);
  int next = 0;
  for (const auto& a : axes) {
    std::vector<Token> toks;
    for (int v = 0; v < a.cardinality; ++v)
      toks.push_back(pair.a_concept_tokens[static_cast<std::size_t>(candidates[next++])]);
    w.caption_tokens.push_back(std::move(toks));
  }

  std::normal_distribution<double> gauss(0.0, 1.0 / std::sqrt(static_cast<double>(axes.size())));
  w.embedding.assign(static_cast<std::size_t>(total_values), std::vector<double>(static_cast<std::size_t>(feature_dim)));
  for (auto& row : w.embedding)
    for (double& x : row) x = gauss(rng);
  return w;
}

inline ImageRecord make_record(const WorldSpec& world, int image_id, int tuple_index) {
  ImageRecord r;
  r.image_id = image_id;
  r.attributes = world.tuple_at(tuple_index);
  r.features = world.features(r.attributes);
  r.gold_caption = world.caption(r.attributes);
  return r;
}

inline std::vector<ImageRecord> gen_image_dataset(const WorldSpec& world, int n, std::uint64_t seed,
                                                  bool without_replacement = true) {
  if (n < 0) throw std::invalid_argument("gen_image_dataset: negative count");
  const int capacity = world.num_tuples();
  if (without_replacement && n > capacity)
    throw std::invalid_argument("gen_image_dataset: n exceeds the number of distinct attribute tuples");
  std::mt19937_64 rng(detail::mix_seed(seed, 0x1A6E));
  std::vector<ImageRecord> out;
  out.reserve(static_cast<std::size_t>(n));
  if (without_replacement) {
    std::vector<int> idx(static_cast<std::size_t>(capacity));
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    for (int i = 0; i < n; ++i) out.push_back(make_record(world, i, idx[static_cast<std::size_t>(i)]));
  } else {
    std::uniform_int_distribution<int> pick(0, capacity - 1);
    for (int i = 0; i < n; ++i) out.push_back(make_record(world, i, pick(rng)));
  }
  return out;
}

/// Relative token counts of a corpus (the source for logit masks).
inline std::map<Token, long long> count_tokens(const std::vector<Sentence>& sentences) {
  std::map<Token, long long> counts;
  for (const auto& s : sentences)
    for (Token t : s) ++counts[t];
  return counts;
}

}  // namespace ecft

#endif  // ECFT_SYNTH_WORLD_HPP
