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

// Multilingual denoising pretraining and the frozen causal reference LM.

#ifndef ECFT_PRETRAIN_HPP
#define ECFT_PRETRAIN_HPP

#include <algorithm>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <vector>

#include "ecft/autograd.hpp"
#include "ecft/generation.hpp"
#include "ecft/incremental.hpp"
#include "ecft/model.hpp"
#include "ecft/params.hpp"
#include "ecft/synth_world.hpp"
#include "ecft/training.hpp"

namespace ecft {

struct NoiseConfig {
  double mask_ratio = 0.3;
  double mean_span = 3.0;
  double deletion_prob = 0.1;
};

/// Span masking (each span collapses to one mask token; span lengths are
/// Poisson with the configured mean, at least 1) followed by independent
/// token deletion. Never returns an empty sequence.
inline Sentence add_noise(const Sentence& s, const NoiseConfig& cfg, std::mt19937_64& rng) {
  const int n = static_cast<int>(s.size());
  std::vector<char> masked(static_cast<std::size_t>(n), 0);
  const int target = static_cast<int>(std::lround(cfg.mask_ratio * n));
  std::poisson_distribution<int> span_len(cfg.mean_span);
  int count = 0;
  int guard = 0;
  while (count < target && guard++ < 4 * n + 8) {
    const int len = std::max(1, std::min(span_len(rng), target - count));
    std::uniform_int_distribution<int> start_dist(0, std::max(0, n - len));
    const int start = start_dist(rng);
    for (int i = start; i < std::min(n, start + len); ++i) {
      if (!masked[static_cast<std::size_t>(i)]) ++count;
      masked[static_cast<std::size_t>(i)] = 1;
    }
  }
  Sentence spanned;
  for (int i = 0; i < n; ++i) {
    if (masked[static_cast<std::size_t>(i)]) {
      if (i == 0 || !masked[static_cast<std::size_t>(i - 1)]) spanned.push_back(Vocabulary::kMask);
    } else {
      spanned.push_back(s[static_cast<std::size_t>(i)]);
    }
  }
  std::bernoulli_distribution drop(cfg.deletion_prob);
  Sentence out;
  for (Token t : spanned)
    if (t == Vocabulary::kMask || !drop(rng)) out.push_back(t);
  if (out.empty()) out.push_back(Vocabulary::kMask);
  return out;
}

struct PretrainConfig {
  int steps = 2000;
  int batch_size = 32;
  double lr = 1e-3;
  int warmup_steps = 100;
  double clip_norm = 1.0;
  NoiseConfig noise;
  /// Relative sampling weight of a low-tier language (high tier = 1).
  double low_tier_weight = 0.25;
  std::uint64_t seed = 0;
};

template <typename T>
using StepCallback = std::function<void(int step, double loss)>;

/// Mean teacher-forced token cross-entropy for reconstructing `clean` from
/// `noisy` (no parameter update).
template <typename T>
double reconstruction_loss(const Seq2Seq<T>& model, const std::vector<Sentence>& noisy,
                           const std::vector<Sentence>& clean, const std::vector<LangId>& langs) {
  Graph<T> g(false);
  Memory mem = model.encode(g, noisy, langs);
  auto tf = model.decode_teacher_forced(g, mem, clean, langs);
  return static_cast<double>(g.scalar(g.cross_entropy(tf.logits, tf.targets, -1)));
}

/// Trains `model` in place on denoising over all corpora. A language's
/// sampling weight follows its resource tier.
template <typename T>
void denoising_pretrain(Seq2Seq<T>& model, const std::vector<MonolingualCorpus>& corpora, const PretrainConfig& cfg,
                        const StepCallback<T>& on_step = nullptr) {
  std::vector<LangId> langs;
  std::vector<double> weights;
  for (const auto& c : corpora) {
    if (c.sentences.empty()) throw std::invalid_argument("denoising_pretrain: empty corpus");
    langs.push_back(c.lang_id);
    weights.push_back(c.resource_tier == ResourceTier::kHigh ? 1.0 : cfg.low_tier_weight);
  }
  std::vector<LangId> distinct = langs;
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (distinct.size() < 2) throw std::invalid_argument("denoising_pretrain: need at least two languages");

  std::mt19937_64 rng(cfg.seed ^ 0xD3A0);
  std::discrete_distribution<int> pick_corpus(weights.begin(), weights.end());
  Adam<T> opt;
  LrSchedule sched{ScheduleShape::kWarmupLinearDecay, cfg.lr, cfg.warmup_steps, cfg.steps};
  for (int step = 0; step < cfg.steps; ++step) {
    std::vector<Sentence> clean, noisy;
    std::vector<LangId> batch_langs;
    for (int i = 0; i < cfg.batch_size; ++i) {
      const auto& c = corpora[static_cast<std::size_t>(pick_corpus(rng))];
      std::uniform_int_distribution<std::size_t> pick(0, c.sentences.size() - 1);
      const Sentence& s = c.sentences[pick(rng)];
      clean.push_back(s);
      noisy.push_back(add_noise(s, cfg.noise, rng));
      batch_langs.push_back(c.lang_id);
    }
    Graph<T> g;
    Memory mem = model.encode(g, noisy, batch_langs);
    auto tf = model.decode_teacher_forced(g, mem, clean, batch_langs);
    Var loss = g.cross_entropy(tf.logits, tf.targets, -1);
    g.backward(loss);
    opt.step(model.params(), sched.at(step), cfg.clip_norm);
    if (on_step) on_step(step, static_cast<double>(g.scalar(loss)));
  }
}

// ---------------------------------------------------------------------------
// Reference language model

/// Frozen copy of a model tuned for causal language modeling: the decoder is
/// conditioned on the encoding of the bare language-control token.
template <typename T>
class ReferenceLM {
 public:
  ReferenceLM() = default;
  explicit ReferenceLM(Seq2Seq<T> model) : model_(std::move(model)) {}

  const Seq2Seq<T>& model() const { return model_; }

  /// Next-token logits at every prefix position of each sentence: row
  /// b*len + t predicts token t given the control token and tokens [0, t).
  /// Returns logits (batch*len) x |V| with len = max length + 1.
  Mat<T> prefix_logits(const std::vector<Sentence>& sentences, const std::vector<LangId>& langs,
                       int* len_out = nullptr) const {
    Graph<T> g(false);
    Memory mem = empty_source(g, langs);
    auto tf = model_.decode_teacher_forced(g, mem, sentences, langs);
    if (len_out != nullptr) *len_out = tf.len;
    return g.value(tf.logits);
  }

  /// Causal LM loss on held-out sentences.
  double loss(const std::vector<Sentence>& sentences, const std::vector<LangId>& langs) const {
    return causal_lm_loss(model_, sentences, langs);
  }

  static Memory empty_source(Graph<T>& g, const Seq2Seq<T>& m, const std::vector<LangId>& langs) {
    return m.encode(g, std::vector<Sentence>(langs.size()), langs);
  }

  static double causal_lm_loss(const Seq2Seq<T>& m, const std::vector<Sentence>& sentences,
                               const std::vector<LangId>& langs) {
    Graph<T> g(false);
    Memory mem = empty_source(g, m, langs);
    auto tf = m.decode_teacher_forced(g, mem, sentences, langs);
    return static_cast<double>(g.scalar(g.cross_entropy(tf.logits, tf.targets, -1)));
  }

 private:
  Memory empty_source(Graph<T>& g, const std::vector<LangId>& langs) const { return empty_source(g, model_, langs); }

  Seq2Seq<T> model_;
};

struct ReferenceLmConfig {
  int steps = 300;
  int batch_size = 32;
  double lr = 5e-4;
  double clip_norm = 1.0;
  std::uint64_t seed = 0;
};

/// Copies `base`, fine-tunes the copy on causal LM over the corpora and
/// freezes it.
template <typename T>
ReferenceLM<T> make_reference_lm(const Seq2Seq<T>& base, const std::vector<MonolingualCorpus>& corpora,
                                 const ReferenceLmConfig& cfg) {
  if (corpora.empty()) throw std::invalid_argument("make_reference_lm: no corpora");
  for (const auto& c : corpora)
    if (c.sentences.empty()) throw std::invalid_argument("make_reference_lm: empty corpus");
  Seq2Seq<T> lm = base;
  std::mt19937_64 rng(cfg.seed ^ 0x1A7E);
  std::uniform_int_distribution<std::size_t> pick_corpus(0, corpora.size() - 1);
  Adam<T> opt;
  LrSchedule sched{ScheduleShape::kLinearDecay, cfg.lr, 0, cfg.steps};
  for (int step = 0; step < cfg.steps; ++step) {
    std::vector<Sentence> batch;
    std::vector<LangId> langs;
    for (int i = 0; i < cfg.batch_size; ++i) {
      const auto& c = corpora[pick_corpus(rng)];
      std::uniform_int_distribution<std::size_t> pick(0, c.sentences.size() - 1);
      batch.push_back(c.sentences[pick(rng)]);
      langs.push_back(c.lang_id);
    }
    Graph<T> g;
    Memory mem = ReferenceLM<T>::empty_source(g, lm, langs);
    auto tf = lm.decode_teacher_forced(g, mem, batch, langs);
    g.backward(g.cross_entropy(tf.logits, tf.targets, -1));
    opt.step(lm.params(), sched.at(step), cfg.clip_norm);
  }
  return ReferenceLM<T>(std::move(lm));
}

}  // namespace ecft

#endif  // ECFT_PRETRAIN_HPP
