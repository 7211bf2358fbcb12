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

// The image reference game: a sender describes a target image (or its
// caption) in natural-language tokens, a receiver picks the target among
// distractors from the message alone.

#ifndef ECFT_EC_GAMES_HPP
#define ECFT_EC_GAMES_HPP

#include <algorithm>
#include <map>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ecft/autograd.hpp"
#include "ecft/generation.hpp"
#include "ecft/model.hpp"
#include "ecft/params.hpp"
#include "ecft/pretrain.hpp"
#include "ecft/synth_world.hpp"

namespace ecft {

enum class GameVariant { kI2I, kT2I };
enum class ScoreFn { kReciprocal, kNegative };
enum class KlDirection { kSenderReference, kReferenceSender };

inline std::string to_string(GameVariant v) { return v == GameVariant::kI2I ? "i2i" : "t2i"; }
inline std::string to_string(ScoreFn s) { return s == ScoreFn::kReciprocal ? "reciprocal" : "negative"; }
inline std::string to_string(KlDirection k) {
  return k == KlDirection::kSenderReference ? "sender_reference" : "reference_sender";
}
inline GameVariant game_variant_from_string(const std::string& s) {
  if (s == "i2i") return GameVariant::kI2I;
  if (s == "t2i") return GameVariant::kT2I;
  throw std::invalid_argument("unknown game variant: " + s);
}
inline ScoreFn score_fn_from_string(const std::string& s) {
  if (s == "reciprocal") return ScoreFn::kReciprocal;
  if (s == "negative") return ScoreFn::kNegative;
  throw std::invalid_argument("unknown score_fn: " + s);
}
inline KlDirection kl_direction_from_string(const std::string& s) {
  if (s == "sender_reference") return KlDirection::kSenderReference;
  if (s == "reference_sender") return KlDirection::kReferenceSender;
  throw std::invalid_argument("unknown kl_direction: " + s);
}

inline constexpr double kScoreEps = 1e-8;

/// Per-stage game settings. Factory functions return the grounding and EC
/// settings of each variant.
struct GameConfig {
  GameVariant variant = GameVariant::kI2I;
  int num_candidates = 16;
  int batch_size = 12;
  double lambda_selection = 1.0;
  double lambda_kl = 0.125;
  double mask_p = 0.95;
  double tau = 1.0;
  ScoreFn score_fn = ScoreFn::kReciprocal;
  KlDirection kl_direction = KlDirection::kSenderReference;
  AggregatorKind aggregator = AggregatorKind::kClsToken;
  GenerationConfig gen = GenerationConfig::emergent();

  void validate() const {
    if (num_candidates < 1) throw std::invalid_argument("num_candidates must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (lambda_selection < 0.0 || lambda_kl < 0.0) throw std::invalid_argument("loss weights must be >= 0");
    if (!(mask_p > 0.0 && mask_p <= 1.0)) throw std::invalid_argument("mask_p must be in (0, 1]");
    if (!(tau > 0.0)) throw std::invalid_argument("tau must be positive");
    gen.validate();
  }

  static GameConfig i2i_grounding() {
    GameConfig c;
    c.variant = GameVariant::kI2I;
    c.num_candidates = 16;
    c.batch_size = 16;
    c.lambda_selection = 4.0;
    c.lambda_kl = 0.0;
    c.aggregator = AggregatorKind::kClsToken;
    return c;
  }
  static GameConfig i2i_ec() {
    GameConfig c;
    c.variant = GameVariant::kI2I;
    c.num_candidates = 16;
    c.batch_size = 12;
    c.lambda_kl = 0.125;
    c.mask_p = 0.95;
    c.aggregator = AggregatorKind::kClsToken;
    return c;
  }
  static GameConfig t2i_grounding() {
    GameConfig c;
    c.variant = GameVariant::kT2I;
    c.num_candidates = 8;
    c.batch_size = 16;
    c.lambda_selection = 8.0;
    c.lambda_kl = 0.0;
    c.aggregator = AggregatorKind::kRecurrent;
    return c;
  }
  static GameConfig t2i_ec() {
    GameConfig c;
    c.variant = GameVariant::kT2I;
    c.num_candidates = 8;
    c.batch_size = 12;
    c.lambda_kl = 0.0625;
    c.mask_p = 0.96;
    c.aggregator = AggregatorKind::kRecurrent;
    return c;
  }
};

/// A game batch. candidates holds C rows per example (example-major) and
/// candidates row b*C + target_index[b] is the target image of example b.
template <typename T>
struct EcBatch {
  GameVariant variant = GameVariant::kI2I;
  int num_candidates = 0;
  Mat<T> sender_features;              // I2I: batch x F
  std::vector<Sentence> sender_texts;  // T2I: gold captions
  LangId text_lang = 0;
  Mat<T> candidates;                   // (batch*C) x F
  std::vector<int> candidate_ids;      // image ids, (batch*C)
  std::vector<int> target_index;
  std::vector<int> target_image;       // image id per example
  std::vector<Sentence> gold_captions;
  std::vector<LangId> target_langs;

  int size() const { return static_cast<int>(target_index.size()); }
};

template <typename T>
Mat<T> feature_rows(const std::vector<const ImageRecord*>& recs) {
  if (recs.empty()) return Mat<T>();
  Mat<T> m(static_cast<Eigen::Index>(recs.size()), static_cast<Eigen::Index>(recs[0]->features.size()));
  for (std::size_t i = 0; i < recs.size(); ++i)
    for (std::size_t j = 0; j < recs[i]->features.size(); ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = static_cast<T>(recs[i]->features[j]);
  return m;
}

/// Samples targets uniformly, distractors uniformly without replacement from
/// the rest of the pool, a uniform target slot and a uniform message language
/// per example.
template <typename T>
EcBatch<T> make_ec_batch(const std::vector<ImageRecord>& pool, int batch_size, int num_candidates,
                         GameVariant variant, const std::vector<LangId>& message_langs, LangId caption_lang,
                         std::mt19937_64& rng) {
  if (pool.empty()) throw std::invalid_argument("make_ec_batch: empty image pool");
  if (num_candidates < 1 || num_candidates > static_cast<int>(pool.size()))
    throw std::invalid_argument("make_ec_batch: num_candidates exceeds the image pool");
  if (message_langs.empty()) throw std::invalid_argument("make_ec_batch: no message languages");
  EcBatch<T> b;
  b.variant = variant;
  b.num_candidates = num_candidates;
  b.text_lang = caption_lang;
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  std::uniform_int_distribution<int> slot(0, num_candidates - 1);
  std::uniform_int_distribution<std::size_t> lang(0, message_langs.size() - 1);
  std::vector<const ImageRecord*> targets, cands;
  std::vector<std::size_t> others(pool.size() - 1);
  for (int e = 0; e < batch_size; ++e) {
    const std::size_t t = pick(rng);
    std::iota(others.begin(), others.end(), 0);
    for (std::size_t& o : others)
      if (o >= t) ++o;
    for (int k = 0; k < num_candidates - 1; ++k) {
      std::uniform_int_distribution<std::size_t> d(static_cast<std::size_t>(k), others.size() - 1);
      std::swap(others[static_cast<std::size_t>(k)], others[d(rng)]);
    }
    const int ti = slot(rng);
    int next = 0;
    for (int c = 0; c < num_candidates; ++c) {
      const ImageRecord* r = c == ti ? &pool[t] : &pool[others[static_cast<std::size_t>(next++)]];
      cands.push_back(r);
      b.candidate_ids.push_back(r->image_id);
    }
    targets.push_back(&pool[t]);
    b.target_index.push_back(ti);
    b.target_image.push_back(pool[t].image_id);
    b.gold_captions.push_back(pool[t].gold_caption);
    b.target_langs.push_back(message_langs[lang(rng)]);
  }
  b.candidates = feature_rows<T>(cands);
  if (variant == GameVariant::kI2I)
    b.sender_features = feature_rows<T>(targets);
  else
    b.sender_texts = b.gold_captions;
  return b;
}

/// Sender cross-attention memory: the adapted image (I2I) or the encoded
/// caption (T2I).
template <typename T>
Memory sender_memory(Graph<T>& g, const Seq2Seq<T>& model, const EcBatch<T>& batch) {
  if (batch.variant == GameVariant::kI2I) return model.adapt_image(g, g.constant(batch.sender_features));
  return model.encode(g, batch.sender_texts, std::vector<LangId>(batch.sender_texts.size(), batch.text_lang));
}

template <typename T>
std::vector<const LogitMask*> message_masks(MaskBank& masks, const std::vector<LangId>& langs, double p) {
  std::vector<const LogitMask*> out;
  for (LangId l : langs) out.push_back(&masks.get(l, p));
  return out;
}

/// Emergent message for every example of the batch, in its target language,
/// under the language mask at cfg.mask_p.
template <typename T>
Message<T> sender_generate(Graph<T>& g, const Seq2Seq<T>& model, const EcBatch<T>& batch, MaskBank& masks,
                           const GameConfig& cfg, std::mt19937_64& rng, bool noise = true) {
  Memory mem = sender_memory(g, model, batch);
  GenerationConfig gen = cfg.gen;
  gen.temperature_tau = cfg.tau;
  gen.mask_p = cfg.mask_p;
  return generate_gumbel(g, model, mem, batch.target_langs, message_masks<T>(masks, batch.target_langs, cfg.mask_p),
                         gen, rng, noise);
}

/// Number of content positions of a message (trailing eos excluded).
inline int message_content_length(const Sentence& s) {
  return static_cast<int>(s.size()) - (!s.empty() && s.back() == Vocabulary::kEos ? 1 : 0);
}

/// Receiver encoder over a message fed as one-hot rows times the embedding
/// table: [cls]? [control] message tokens (eos excluded).
template <typename T>
Memory encode_message(Graph<T>& g, const Seq2Seq<T>& model, const Message<T>& msg, bool insert_cls) {
  const int B = static_cast<int>(msg.langs.size());
  if (B == 0) throw std::invalid_argument("receiver: empty message batch");
  const int prefix = insert_cls ? 2 : 1;
  std::vector<int> special;
  for (int b = 0; b < B; ++b) {
    if (insert_cls) special.push_back(Vocabulary::kCls);
    special.push_back(model.vocab().control_token(msg.langs[static_cast<std::size_t>(b)]));
  }
  std::vector<int> n(static_cast<std::size_t>(B));
  int max_n = 0;
  for (int b = 0; b < B; ++b) {
    n[static_cast<std::size_t>(b)] = message_content_length(msg.hard_tokens[static_cast<std::size_t>(b)]);
    max_n = std::max(max_n, n[static_cast<std::size_t>(b)]);
  }
  std::vector<Var> parts{model.embed(g, special)};
  Var E = model.embedding(g);
  for (int s = 0; s < max_n; ++s) parts.push_back(g.matmul(msg.one_hots[static_cast<std::size_t>(s)], E));
  const int len = max_n + prefix;
  const int base = B * prefix;
  std::vector<int> index(static_cast<std::size_t>(B * len), -1);
  std::vector<int> lengths;
  for (int b = 0; b < B; ++b) {
    for (int i = 0; i < prefix; ++i) index[static_cast<std::size_t>(b * len + i)] = b * prefix + i;
    for (int s = 0; s < n[static_cast<std::size_t>(b)]; ++s)
      index[static_cast<std::size_t>(b * len + prefix + s)] = base + s * B + b;
    lengths.push_back(n[static_cast<std::size_t>(b)] + prefix);
  }
  model.check_positions(len);
  Var rows = g.gather_rows(g.concat_rows(parts), std::move(index));
  Memory m = model.encode_embedded(g, rows, B, len, std::move(lengths));
  m.cls_inserted = insert_cls;
  return m;
}

/// Scores of the C candidates of every example: batch x C.
template <typename T>
Var score_candidates(Graph<T>& g, Var r, const Mat<T>& candidates, int num_candidates, ScoreFn fn) {
  if (g.value(r).cols() != candidates.cols()) throw std::invalid_argument("receiver: feature dimension mismatch");
  return g.inverse_mse_scores(r, candidates, num_candidates, static_cast<T>(kScoreEps), fn == ScoreFn::kReciprocal);
}

/// Receiver scores from a differentiable message.
template <typename T>
Var receiver_score(Graph<T>& g, const Seq2Seq<T>& model, const Message<T>& msg, const Mat<T>& candidates,
                   int num_candidates, const GameConfig& cfg) {
  for (const auto& s : msg.hard_tokens)
    if (s.empty()) throw std::invalid_argument("receiver: empty message");
  Memory h = encode_message(g, model, msg, cfg.aggregator == AggregatorKind::kClsToken);
  return score_candidates(g, model.aggregate(g, h, cfg.aggregator), candidates, num_candidates, cfg.score_fn);
}

/// Receiver scores from plain text (the gold caption during grounding).
template <typename T>
Var receiver_score_text(Graph<T>& g, const Seq2Seq<T>& model, const std::vector<Sentence>& texts, LangId lang,
                        const Mat<T>& candidates, int num_candidates, const GameConfig& cfg) {
  const bool cls = cfg.aggregator == AggregatorKind::kClsToken;
  Memory h = model.encode(g, texts, std::vector<LangId>(texts.size(), lang), cls);
  return score_candidates(g, model.aggregate(g, h, cfg.aggregator), candidates, num_candidates, cfg.score_fn);
}

/// Mean over examples of -log softmax(scores)[target].
template <typename T>
Var selection_loss(Graph<T>& g, Var scores, const std::vector<int>& target_index) {
  const auto& s = g.value(scores);
  if (static_cast<Eigen::Index>(target_index.size()) != s.rows())
    throw std::invalid_argument("selection_loss: target count mismatch");
  for (int t : target_index)
    if (t < 0 || t >= s.cols()) throw std::out_of_range("selection_loss: target index out of range");
  return g.cross_entropy(scores, target_index, -1);
}

template <typename T>
double selection_accuracy(const Mat<T>& scores, const std::vector<int>& target_index) {
  if (scores.rows() == 0) return 0.0;
  int hit = 0;
  for (Eigen::Index b = 0; b < scores.rows(); ++b) {
    Eigen::Index arg = 0;
    scores.row(b).maxCoeff(&arg);
    hit += arg == target_index[static_cast<std::size_t>(b)];
  }
  return static_cast<double>(hit) / static_cast<double>(scores.rows());
}

/// Mean over message positions (eos included) of the KL between the
/// sender's raw next-token distribution and the reference LM's on the same
/// emitted prefix, both renormalized over the position's language mask.
template <typename T>
Var kl_regularizer(Graph<T>& g, const Message<T>& msg, const ReferenceLM<T>& reference, MaskBank& masks, double mask_p,
                   KlDirection direction = KlDirection::kSenderReference) {
  const int B = static_cast<int>(msg.langs.size());
  if (static_cast<int>(msg.raw_logits.size()) != msg.steps) throw std::invalid_argument("kl: logits/message length mismatch");
  std::vector<Sentence> prefixes;
  int total = 0;
  for (int b = 0; b < B; ++b) {
    const Sentence& s = msg.hard_tokens[static_cast<std::size_t>(b)];
    if (static_cast<int>(s.size()) > msg.steps) throw std::invalid_argument("kl: logits/message length mismatch");
    prefixes.push_back(Sentence(s.begin(), s.begin() + message_content_length(s)));
    total += static_cast<int>(s.size());
  }
  if (total == 0) return g.constant(Mat<T>::Zero(1, 1));
  int ref_len = 0;
  const Mat<T> ref = reference.prefix_logits(prefixes, msg.langs, &ref_len);
  std::vector<std::pair<Var, T>> terms;
  std::map<LangId, std::vector<int>> groups;
  for (int t = 0; t < msg.steps; ++t) {
    groups.clear();
    for (int b = 0; b < B; ++b)
      if (t < msg.length(b)) groups[msg.langs[static_cast<std::size_t>(b)]].push_back(b);
    for (auto& [lang, rows] : groups) {
      Mat<T> q(static_cast<Eigen::Index>(rows.size()), ref.cols());
      for (std::size_t i = 0; i < rows.size(); ++i) q.row(static_cast<Eigen::Index>(i)) = ref.row(rows[i] * ref_len + t);
      const LogitMask& m = masks.get(lang, mask_p);
      Var p = g.gather_rows(msg.raw_logits[static_cast<std::size_t>(t)], rows);
      Var kl = g.masked_kl(p, q, m.allowed, direction == KlDirection::kReferenceSender);
      terms.emplace_back(kl, static_cast<T>(rows.size()) / static_cast<T>(total));
    }
  }
  return g.combine(terms);
}

struct GameLosses {
  double selection_ce = 0.0;
  double kl_reg = 0.0;
  double caption_ce = 0.0;
  double total = 0.0;
  double lambda_selection = 0.0;
  double lambda_kl = 0.0;
  double receiver_accuracy = 0.0;
  double message_length_mean = 0.0;
  double caption_equality_rate = 0.0;
  double grad_norm = 0.0;
};

/// Supervised grounding: caption cross-entropy for the sender (from the
/// adapted image in I2I, from the caption's own encoding in T2I) plus
/// lambda_selection times the receiver's selection loss on the gold caption.
template <typename T>
GameLosses grounding_step(Seq2Seq<T>& model, Adam<T>& opt, const EcBatch<T>& batch, const GameConfig& cfg, double lr,
                          double clip_norm) {
  const Vocabulary& vocab = model.vocab();
  if (vocab.language(batch.text_lang).tier != ResourceTier::kHigh)
    throw std::invalid_argument("grounding: caption language is not high-resource");
  for (const auto& c : batch.gold_captions)
    for (Token t : c)
      if (vocab.is_special(t) || !vocab.usable_by(t, batch.text_lang))
        throw std::invalid_argument("grounding: caption outside the high-resource language");
  const std::vector<LangId> caption_langs(batch.gold_captions.size(), batch.text_lang);
  Graph<T> g;
  Memory mem = batch.variant == GameVariant::kI2I ? model.adapt_image(g, g.constant(batch.sender_features))
                                                  : model.encode(g, batch.gold_captions, caption_langs);
  auto tf = model.decode_teacher_forced(g, mem, batch.gold_captions, caption_langs);
  Var cap = g.cross_entropy(tf.logits, tf.targets, -1);
  Var scores = receiver_score_text(g, model, batch.gold_captions, batch.text_lang, batch.candidates,
                                   batch.num_candidates, cfg);
  Var sel = selection_loss(g, scores, batch.target_index);
  Var total = g.combine({{cap, T(1)}, {sel, static_cast<T>(cfg.lambda_selection)}});
  g.backward(total);
  GameLosses out;
  out.caption_ce = static_cast<double>(g.scalar(cap));
  out.selection_ce = static_cast<double>(g.scalar(sel));
  out.total = static_cast<double>(g.scalar(total));
  out.lambda_selection = cfg.lambda_selection;
  out.receiver_accuracy = selection_accuracy(g.value(scores), batch.target_index);
  double len = 0;
  for (const auto& c : batch.gold_captions) len += static_cast<double>(c.size());
  out.message_length_mean = len / std::max(1, batch.size());
  out.caption_equality_rate = 1.0;
  out.grad_norm = opt.step(model.params(), lr, clip_norm);
  return out;
}

/// One reference-game step: selection loss plus lambda_kl times the KL drift
/// regularizer, gradients through the straight-through message path.
template <typename T>
GameLosses ec_step(Seq2Seq<T>& model, Adam<T>& opt, const EcBatch<T>& batch, const ReferenceLM<T>* reference,
                   MaskBank& masks, const GameConfig& cfg, double lr, double clip_norm, std::mt19937_64& rng) {
  cfg.validate();
  if (batch.size() == 0) throw std::invalid_argument("ec_step: empty batch");
  Graph<T> g;
  Message<T> msg = sender_generate(g, model, batch, masks, cfg, rng);
  Var scores = receiver_score(g, model, msg, batch.candidates, batch.num_candidates, cfg);
  Var sel = selection_loss(g, scores, batch.target_index);
  std::vector<std::pair<Var, T>> terms{{sel, static_cast<T>(cfg.lambda_selection)}};
  GameLosses out;
  Var kl = g.constant(Mat<T>::Zero(1, 1));
  if (reference != nullptr) {
    kl = kl_regularizer(g, msg, *reference, masks, cfg.mask_p, cfg.kl_direction);
    terms.emplace_back(kl, static_cast<T>(cfg.lambda_kl));
  } else if (cfg.lambda_kl > 0.0) {
    throw std::invalid_argument("ec_step: lambda_kl > 0 requires a reference LM");
  }
  Var total = g.combine(terms);
  g.backward(total);
  out.selection_ce = static_cast<double>(g.scalar(sel));
  out.kl_reg = static_cast<double>(g.scalar(kl));
  out.total = static_cast<double>(g.scalar(total));
  out.lambda_selection = cfg.lambda_selection;
  out.lambda_kl = cfg.lambda_kl;
  out.receiver_accuracy = selection_accuracy(g.value(scores), batch.target_index);
  double len = 0;
  int equal = 0;
  for (int b = 0; b < batch.size(); ++b) {
    const Sentence& s = msg.hard_tokens[static_cast<std::size_t>(b)];
    len += message_content_length(s);
    equal += Sentence(s.begin(), s.begin() + message_content_length(s)) == batch.gold_captions[static_cast<std::size_t>(b)];
  }
  out.message_length_mean = len / batch.size();
  out.caption_equality_rate = static_cast<double>(equal) / batch.size();
  out.grad_norm = opt.step(model.params(), lr, clip_norm);
  return out;
}

}  // namespace ecft

#endif  // ECFT_EC_GAMES_HPP
