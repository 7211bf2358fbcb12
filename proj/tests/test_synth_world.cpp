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

#include <gtest/gtest.h>

#include <random>
#include <set>

#include "ecft/synth_world.hpp"

namespace ecft {
namespace {

TEST(LanguagePair, LexiconIsBijectionOverAllTokens) {
  const auto pv = gen_language_pair(7, 100, ReorderRule::swap_halves());
  const auto& p = pv.pair;
  ASSERT_EQ(p.lexicon.size(), 100u);
  std::set<Token> image(p.lexicon.begin(), p.lexicon.end());
  EXPECT_EQ(image.size(), 100u);
  for (int i = 0; i < 100; ++i) {
    const Token a = p.a_begin + i;
    const Token b = p.lexicon[static_cast<std::size_t>(i)];
    ASSERT_TRUE(p.in_b(b));
    EXPECT_EQ(p.inverse_lexicon[static_cast<std::size_t>(b - p.b_begin)], a);
  }
}

TEST(LanguagePair, InventoriesAreDisjoint) {
  const auto pv = gen_language_pair(3, 20, ReorderRule::identity());
  const auto& a = pv.vocab.language(0);
  const auto& b = pv.vocab.language(1);
  for (Token t = a.content_begin; t < a.content_begin + a.content_size; ++t) {
    EXPECT_FALSE(b.owns(t));
    EXPECT_FALSE(pv.vocab.is_special(t));
  }
}

TEST(LanguagePair, SameSeedIsIdentical) {
  const auto x = gen_language_pair(11, 40, ReorderRule::rotate(2));
  const auto y = gen_language_pair(11, 40, ReorderRule::rotate(2));
  EXPECT_EQ(x.pair, y.pair);
  EXPECT_EQ(x.vocab, y.vocab);
  const auto z = gen_language_pair(12, 40, ReorderRule::rotate(2));
  EXPECT_NE(x.pair.lexicon, z.pair.lexicon);
}

TEST(LanguagePair, RejectsTinyVocabulary) {
  EXPECT_THROW(gen_language_pair(1, 7, ReorderRule::identity()), std::invalid_argument);
  EXPECT_NO_THROW(gen_language_pair(1, 8, ReorderRule::identity()));
}

TEST(SharedTokens, MapToThemselvesAndAreUsableByBothSides) {
  const auto pv = gen_language_pair(5, 24, ReorderRule::swap_halves(), {}, 6);
  const auto& p = pv.pair;
  EXPECT_EQ(p.content_size, 18);
  EXPECT_EQ(p.num_concepts(), 24);
  EXPECT_EQ(pv.vocab.shared_size(), 6);
  for (Token t = pv.vocab.shared_begin(); t < pv.vocab.shared_begin() + 6; ++t) {
    EXPECT_TRUE(p.is_shared(t));
    EXPECT_TRUE(pv.vocab.usable_by(t, 0));
    EXPECT_TRUE(pv.vocab.usable_by(t, 1));
    EXPECT_EQ(pv.vocab.language_of(t), -1);
    EXPECT_EQ(oracle_translate({t}, p, Direction::kAtoB), Sentence{t});
    EXPECT_EQ(oracle_translate({t}, p, Direction::kBtoA), Sentence{t});
  }
  EXPECT_FALSE(pv.vocab.usable_by(p.b_begin, 0));
  const Sentence s{p.a_begin, pv.vocab.shared_begin(), static_cast<Token>(p.a_begin + 1)};
  EXPECT_EQ(oracle_translate(oracle_translate(s, p, Direction::kAtoB), p, Direction::kBtoA), s);
}

TEST(SharedTokens, ZeroSharedLeavesThePairUnchanged) {
  const auto x = gen_language_pair(11, 40, ReorderRule::rotate(2));
  const auto y = gen_language_pair(11, 40, ReorderRule::rotate(2), {}, 0);
  EXPECT_EQ(x.pair, y.pair);
  EXPECT_EQ(y.vocab.shared_size(), 0);
}

TEST(SharedTokens, MustLeaveEnoughOwnConcepts) {
  EXPECT_THROW(gen_language_pair(1, 16, ReorderRule::identity(), {}, 9), std::invalid_argument);
  EXPECT_THROW(gen_language_pair(1, 16, ReorderRule::identity(), {}, -1), std::invalid_argument);
  EXPECT_NO_THROW(gen_language_pair(1, 16, ReorderRule::identity(), {}, 8));
}

TEST(ReorderRule, InverseRestoresEveryLength) {
  for (const auto& rule : {ReorderRule::identity(), ReorderRule::swap_halves(), ReorderRule::rotate(1),
                           ReorderRule::rotate(3), ReorderRule::reverse()}) {
    for (int n = 0; n <= 13; ++n) {
      Sentence s(static_cast<std::size_t>(n));
      std::iota(s.begin(), s.end(), 100);
      EXPECT_EQ(rule.invert(rule.apply(s)), s) << rule.name() << " n=" << n;
      EXPECT_EQ(rule.apply(rule.invert(s)), s) << rule.name() << " n=" << n;
    }
  }
}

TEST(ReorderRule, NamesRoundTrip) {
  for (const auto& rule : {ReorderRule::identity(), ReorderRule::swap_halves(), ReorderRule::rotate(4),
                           ReorderRule::reverse()})
    EXPECT_EQ(ReorderRule::parse(rule.name()), rule);
  EXPECT_THROW(ReorderRule::parse("shuffle"), std::invalid_argument);
}

TEST(OracleTranslate, ThreeTokenSwapHalvesByHand) {
  const auto pv = gen_language_pair(5, 16, ReorderRule::swap_halves());
  const auto& p = pv.pair;
  const Sentence s{p.a_begin + 0, p.a_begin + 5, p.a_begin + 9};
  const auto lex = [&](Token a) { return p.lexicon[static_cast<std::size_t>(a - p.a_begin)]; };
  // split at 3 / 2 = 1: [x0 | x1 x2] becomes [x1 x2 x0]
  const Sentence expected{lex(s[1]), lex(s[2]), lex(s[0])};
  EXPECT_EQ(oracle_translate(s, p, Direction::kAtoB), expected);
}

TEST(OracleTranslate, RoundTripAndEmpty) {
  const auto pv = gen_language_pair(9, 30, ReorderRule::swap_halves());
  std::mt19937_64 rng(1);
  for (int i = 0; i < 200; ++i) {
    const Sentence s = sample_sentence(pv.pair, 0, rng);
    EXPECT_EQ(oracle_translate(oracle_translate(s, pv.pair, Direction::kAtoB), pv.pair, Direction::kBtoA), s);
  }
  EXPECT_TRUE(oracle_translate({}, pv.pair, Direction::kAtoB).empty());
}

TEST(OracleTranslate, RejectsForeignTokens) {
  const auto pv = gen_language_pair(9, 30, ReorderRule::identity());
  EXPECT_THROW(oracle_translate({pv.pair.b_begin}, pv.pair, Direction::kAtoB), std::out_of_range);
  EXPECT_THROW(oracle_translate({Vocabulary::kEos}, pv.pair, Direction::kBtoA), std::out_of_range);
}

TEST(MonolingualCorpus, CardinalityAndInventory) {
  const auto pv = gen_language_pair(2, 24, ReorderRule::rotate(1));
  for (LangId lang : {0, 1}) {
    const auto c = gen_monolingual_corpus(pv.pair, lang, 1000, 4);
    ASSERT_EQ(c.sentences.size(), 1000u);
    const auto& info = pv.vocab.language(lang);
    for (const auto& s : c.sentences) {
      EXPECT_GE(s.size(), 3u);
      EXPECT_LE(s.size(), 12u);
      for (Token t : s) ASSERT_TRUE(info.owns(t));
    }
  }
  EXPECT_THROW(gen_monolingual_corpus(pv.pair, 5, 10, 1), std::invalid_argument);
  EXPECT_THROW(gen_monolingual_corpus(pv.pair, 0, 0, 1), std::invalid_argument);
}

TEST(MonolingualCorpus, DefaultTiersOrdered) {
  TierSizes t;
  EXPECT_LT(t.size_for(ResourceTier::kLow), t.size_for(ResourceTier::kHigh));
}

TEST(MonolingualCorpus, CorporaAreNotParallel) {
  const auto pv = gen_language_pair(2, 24, ReorderRule::identity());
  const auto a = gen_monolingual_corpus(pv.pair, 0, 500, 4);
  const auto b = gen_monolingual_corpus(pv.pair, 1, 500, 4);
  int aligned = 0;
  for (std::size_t i = 0; i < a.sentences.size(); ++i)
    aligned += oracle_translate(a.sentences[i], pv.pair, Direction::kAtoB) == b.sentences[i];
  EXPECT_LT(aligned, 5);
}

TEST(LatentGrammar, ZipfianFrequenciesAreNonUniform) {
  const auto pv = gen_language_pair(6, 40, ReorderRule::identity());
  const auto c = gen_monolingual_corpus(pv.pair, 0, 4000, 6);
  const auto counts = count_tokens(c.sentences);
  long long lo = std::numeric_limits<long long>::max(), hi = 0;
  for (const auto& [t, n] : counts) lo = std::min(lo, n), hi = std::max(hi, n);
  EXPECT_GT(hi, 5 * lo);
}

TEST(LatentGrammar, MarkovTransitionsFollowSuccessorLists) {
  SamplerConfig sc;
  sc.markov_strength = 1.0;
  const auto pv = gen_language_pair(6, 20, ReorderRule::identity(), sc);
  const auto& g = pv.pair.grammar;
  std::mt19937_64 rng(3);
  for (int i = 0; i < 300; ++i) {
    const auto concepts = g.sample(rng);
    for (std::size_t k = 1; k < concepts.size(); ++k) {
      const auto& succ = g.successors[static_cast<std::size_t>(concepts[k - 1])];
      EXPECT_NE(std::find(succ.begin(), succ.end(), concepts[k]), succ.end());
    }
  }
  sc.markov_strength = 1.5;
  EXPECT_THROW(gen_language_pair(6, 20, ReorderRule::identity(), sc), std::invalid_argument);
}

TEST(ParallelSet, ExcludesGivenSentences) {
  const auto pv = gen_language_pair(8, 24, ReorderRule::swap_halves());
  const auto corpus = gen_monolingual_corpus(pv.pair, 0, 2000, 8);
  const std::set<Sentence> seen(corpus.sentences.begin(), corpus.sentences.end());
  const auto set = gen_parallel_set(pv.pair, Direction::kAtoB, 200, 9, &seen);
  ASSERT_EQ(set.size(), 200u);
  for (const auto& ex : set) {
    EXPECT_EQ(seen.count(ex.src), 0u);
    EXPECT_EQ(ex.ref, oracle_translate(ex.src, pv.pair, Direction::kAtoB));
  }
}

class ImageWorldTest : public ::testing::Test {
 protected:
  void SetUp() override {
    pv_ = gen_language_pair(4, 32, ReorderRule::identity());
    world_ = gen_world(4, {{"shape", 3}, {"color", 4}, {"count", 2}}, 16, pv_.pair);
  }
  PairWithVocab pv_;
  WorldSpec world_;
};

TEST_F(ImageWorldTest, CapacityIsProductOfCardinalities) {
  EXPECT_EQ(world_.num_tuples(), 24);
  EXPECT_EQ(gen_image_dataset(world_, 24, 1).size(), 24u);
  EXPECT_THROW(gen_image_dataset(world_, 25, 1), std::invalid_argument);
  EXPECT_NO_THROW(gen_image_dataset(world_, 40, 1, false));
}

TEST_F(ImageWorldTest, CaptionsFollowTheGrammar) {
  for (const auto& r : gen_image_dataset(world_, 24, 2)) {
    ASSERT_EQ(r.gold_caption.size(), 3u);
    for (std::size_t a = 0; a < 3; ++a)
      EXPECT_EQ(r.gold_caption[a], world_.caption_tokens[a][static_cast<std::size_t>(r.attributes[a])]);
    for (Token t : r.gold_caption) EXPECT_TRUE(pv_.pair.in_a(t));
  }
}

TEST_F(ImageWorldTest, DistinctTuplesGiveDistinctFeatures) {
  const auto recs = gen_image_dataset(world_, 24, 3);
  std::set<std::vector<double>> feats;
  for (const auto& r : recs) feats.insert(r.features);
  EXPECT_EQ(feats.size(), 24u);
}

TEST_F(ImageWorldTest, SameTupleGivesSameFeatures) {
  const auto recs = gen_image_dataset(world_, 200, 5, false);
  std::map<std::vector<int>, std::vector<double>> by_tuple;
  for (const auto& r : recs) {
    auto [it, fresh] = by_tuple.emplace(r.attributes, r.features);
    if (!fresh) EXPECT_EQ(it->second, r.features);
  }
}

TEST_F(ImageWorldTest, RejectsTooFewFeatureDims) {
  EXPECT_THROW(gen_world(1, {{"a", 2}, {"b", 2}, {"c", 2}}, 2, pv_.pair), std::invalid_argument);
}

}  // namespace
}  // namespace ecft
