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

// Everything between logits and tokens: language masks, repetition penalty,
// n-gram blocking, greedy and beam decoding, and straight-through
// Gumbel-Softmax sampling with a gradient path back into the sender.

#ifndef ECFT_GENERATION_HPP
#define ECFT_GENERATION_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <iterator>
#include <map>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ecft/autograd.hpp"
#include "ecft/incremental.hpp"
#include "ecft/model.hpp"
#include "ecft/vocab.hpp"

namespace ecft {

struct LogitMask {
  LangId lang_id = 0;
  std::vector<char> allowed;
  double threshold_p = 1.0;

  bool allows(Token t) const { return t >= 0 && t < static_cast<int>(allowed.size()) && allowed[t]; }
  int num_allowed() const { return static_cast<int>(std::count(allowed.begin(), allowed.end(), 1)); }
};

/// Smallest frequency-descending prefix of content tokens whose cumulative
/// relative frequency reaches p (ties by ascending token id), plus every
/// special token.
inline LogitMask build_logit_mask(const std::map<Token, long long>& token_counts, double p, const Vocabulary& vocab,
                                  LangId lang = 0) {
  if (!(p > 0.0 && p <= 1.0)) throw std::invalid_argument("build_logit_mask: p must be in (0, 1]");
  long long total = 0;
  std::vector<std::pair<Token, long long>> items;
  for (auto [t, c] : token_counts) {
    if (c < 0) throw std::invalid_argument("build_logit_mask: negative count");
    if (!vocab.in_range(t)) throw std::out_of_range("build_logit_mask: token out of vocabulary");
    if (c > 0 && !vocab.is_special(t)) {
      items.emplace_back(t, c);
      total += c;
    }
  }
  if (total == 0) throw std::invalid_argument("build_logit_mask: all counts are zero");
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  LogitMask m;
  m.lang_id = lang;
  m.threshold_p = p;
  m.allowed.assign(static_cast<std::size_t>(vocab.size()), 0);
  for (Token t = 0; t < vocab.size(); ++t)
    if (vocab.is_special(t)) m.allowed[t] = 1;
  long long cum = 0;
  for (auto [t, c] : items) {
    m.allowed[t] = 1;
    cum += c;
    if (static_cast<double>(cum) / static_cast<double>(total) >= p) break;
  }
  return m;
}

inline LogitMask full_mask(const Vocabulary& vocab, LangId lang = 0) {
  LogitMask m;
  m.lang_id = lang;
  m.allowed.assign(static_cast<std::size_t>(vocab.size()), 1);
  return m;
}

/// Per-language token counts with masks built lazily for each threshold.
class MaskBank {
 public:
  MaskBank() = default;
  explicit MaskBank(const Vocabulary& vocab) : vocab_(vocab) {}

  void set_counts(LangId lang, std::map<Token, long long> counts) {
    counts_[lang] = std::move(counts);
    for (auto it = cache_.begin(); it != cache_.end();) it = it->first.first == lang ? cache_.erase(it) : std::next(it);
  }
  bool has(LangId lang) const { return counts_.count(lang) > 0; }
  const std::map<Token, long long>& counts(LangId lang) const {
    auto it = counts_.find(lang);
    if (it == counts_.end()) throw std::out_of_range("MaskBank: no counts for language " + std::to_string(lang));
    return it->second;
  }

  const LogitMask& get(LangId lang, double p) {
    auto key = std::make_pair(lang, p);
    auto it = cache_.find(key);
    if (it == cache_.end()) it = cache_.emplace(key, build_logit_mask(counts(lang), p, vocab_, lang)).first;
    return it->second;
  }

  const std::map<LangId, std::map<Token, long long>>& all_counts() const { return counts_; }

 private:
  Vocabulary vocab_;
  std::map<LangId, std::map<Token, long long>> counts_;
  std::map<std::pair<LangId, double>, LogitMask> cache_;
};

template <typename T>
RowVec<T> apply_mask(RowVec<T> logits, const LogitMask& mask) {
  if (logits.size() != static_cast<Eigen::Index>(mask.allowed.size()))
    throw std::invalid_argument("apply_mask: length mismatch");
  for (Eigen::Index i = 0; i < logits.size(); ++i)
    if (!mask.allowed[static_cast<std::size_t>(i)]) logits[i] = kNegSentinel<T>;
  return logits;
}

/// Multiplicative factor per vocabulary entry implementing the penalty:
/// positive logits of history tokens are divided, non-positive multiplied.
template <typename T>
RowVec<T> repetition_multiplier(const RowVec<T>& logits, const Sentence& history, double penalty) {
  if (penalty < 1.0) throw std::invalid_argument("repetition penalty must be >= 1");
  RowVec<T> mult = RowVec<T>::Ones(logits.size());
  for (Token t : history) {
    if (t < 0 || t >= logits.size()) continue;
    mult[t] = logits[t] > T(0) ? static_cast<T>(1.0 / penalty) : static_cast<T>(penalty);
  }
  return mult;
}

template <typename T>
RowVec<T> apply_repetition_penalty(const RowVec<T>& logits, const Sentence& history, double penalty) {
  return logits.cwiseProduct(repetition_multiplier(logits, history, penalty));
}

/// Tokens that would complete an n-gram already present in history.
inline std::vector<Token> banned_ngram_tokens(const Sentence& history, int n) {
  if (n < 1) throw std::invalid_argument("no_repeat_ngram must be >= 1");
  std::vector<Token> banned;
  const int len = static_cast<int>(history.size());
  if (len < n - 1) return banned;
  if (n == 1) return history;
  // the last n-1 tokens form the prefix that a new n-gram would extend
  for (int start = 0; start + n <= len; ++start) {
    bool match = true;
    for (int j = 0; j < n - 1; ++j)
      if (history[start + j] != history[len - (n - 1) + j]) {
        match = false;
        break;
      }
    if (match) banned.push_back(history[start + n - 1]);
  }
  return banned;
}

template <typename T>
RowVec<T> block_repeated_ngrams(RowVec<T> logits, const Sentence& history, int n) {
  for (Token t : banned_ngram_tokens(history, n))
    if (t >= 0 && t < logits.size()) logits[t] = kNegSentinel<T>;
  return logits;
}

struct GenerationConfig {
  int max_len = 64;
  int num_beams = 5;
  double repetition_penalty = 1.0;
  int no_repeat_ngram = 0;  // 0 disables
  double temperature_tau = 1.0;
  double mask_p = 0.99;
  bool use_mask = true;
  double length_penalty = 1.0;

  void validate() const {
    if (max_len < 1) throw std::invalid_argument("max_len must be >= 1");
    if (num_beams < 1) throw std::invalid_argument("num_beams must be >= 1");
    if (repetition_penalty < 1.0) throw std::invalid_argument("repetition_penalty must be >= 1");
    if (!(temperature_tau > 0.0)) throw std::invalid_argument("tau must be positive");
    if (no_repeat_ngram < 0) throw std::invalid_argument("no_repeat_ngram must be >= 0");
  }

  static GenerationConfig emergent() {
    GenerationConfig c;
    c.max_len = 32;
    c.num_beams = 1;
    c.repetition_penalty = 1.2;
    c.no_repeat_ngram = 4;
    c.mask_p = 0.95;
    return c;
  }

  static GenerationConfig backtranslation() {
    GenerationConfig c;
    c.max_len = 64;
    c.num_beams = 5;
    c.mask_p = 0.9;
    return c;
  }
};

/// Allowed set and multiplier after mask, repetition penalty and n-gram
/// blocking for one row of raw logits with the given history.
template <typename T>
struct Constraint {
  RowVec<T> multiplier;
  std::vector<char> allowed;
};

template <typename T>
Constraint<T> make_constraint(const RowVec<T>& raw, const Sentence& history, const LogitMask* mask,
                              const GenerationConfig& cfg) {
  Constraint<T> c;
  c.allowed.assign(static_cast<std::size_t>(raw.size()), 1);
  if (mask != nullptr) c.allowed = mask->allowed;
  if (cfg.no_repeat_ngram > 0)
    for (Token t : banned_ngram_tokens(history, cfg.no_repeat_ngram)) c.allowed[static_cast<std::size_t>(t)] = 0;
  c.multiplier = cfg.repetition_penalty > 1.0 ? repetition_multiplier(raw, history, cfg.repetition_penalty)
                                              : RowVec<T>(RowVec<T>::Ones(raw.size()));
  if (std::find(c.allowed.begin(), c.allowed.end(), 1) == c.allowed.end())
    throw std::runtime_error("generation: no allowed tokens remain after masking");
  return c;
}

template <typename T>
RowVec<T> constrained_logits(const RowVec<T>& raw, const Sentence& history, const LogitMask* mask,
                             const GenerationConfig& cfg) {
  Constraint<T> c = make_constraint(raw, history, mask, cfg);
  RowVec<T> out = raw.cwiseProduct(c.multiplier);
  for (Eigen::Index i = 0; i < out.size(); ++i)
    if (!c.allowed[static_cast<std::size_t>(i)]) out[i] = kNegSentinel<T>;
  return out;
}

template <typename T>
RowVec<double> log_softmax(const RowVec<T>& logits) {
  RowVec<double> x = logits.template cast<double>();
  const double mx = x.maxCoeff();
  const double lse = mx + std::log((x.array() - mx).exp().sum());
  return (x.array() - lse).matrix();
}

// ---------------------------------------------------------------------------
// Decoding over an abstract step function. StepFn receives the last token of
// every live row and returns next-token logits, one row each. ReorderFn
// selects which existing rows continue (new row i extends old row p[i]).

template <typename T>
using StepFn = std::function<Mat<T>(const std::vector<Token>&)>;
using ReorderFn = std::function<void(const std::vector<int>&)>;

struct Hypothesis {
  Sentence tokens;  // generated tokens, including a final eos if emitted
  double logprob = 0;
  double score = 0;  // length-normalized
};

inline double normalized_score(double logprob, std::size_t len, double length_penalty) {
  return logprob / std::pow(static_cast<double>(std::max<std::size_t>(len, 1)), length_penalty);
}

/// Greedy decoding of `batch` independent rows.
template <typename T>
std::vector<Hypothesis> greedy_search(int batch, const std::vector<Token>& first_tokens, const StepFn<T>& step,
                                      const ReorderFn& reorder, const std::vector<const LogitMask*>& masks,
                                      const GenerationConfig& cfg) {
  cfg.validate();
  std::vector<Hypothesis> out(static_cast<std::size_t>(batch));
  std::vector<int> live(static_cast<std::size_t>(batch));
  std::iota(live.begin(), live.end(), 0);
  std::vector<Token> last = first_tokens;
  for (int t = 0; t < cfg.max_len && !live.empty(); ++t) {
    Mat<T> logits = step(last);
    std::vector<int> keep_rows, next_live;
    std::vector<Token> next_last;
    for (std::size_t r = 0; r < live.size(); ++r) {
      const int b = live[r];
      Hypothesis& h = out[static_cast<std::size_t>(b)];
      RowVec<T> c = constrained_logits<T>(logits.row(static_cast<Eigen::Index>(r)), h.tokens,
                                          masks[static_cast<std::size_t>(b)], cfg);
      RowVec<double> lp = log_softmax<T>(c);
      Eigen::Index arg = 0;
      c.maxCoeff(&arg);
      h.tokens.push_back(static_cast<Token>(arg));
      h.logprob += lp[arg];
      if (arg != Vocabulary::kEos) {
        keep_rows.push_back(static_cast<int>(r));
        next_live.push_back(b);
        next_last.push_back(static_cast<Token>(arg));
      }
    }
    if (next_live.empty()) break;
    if (next_live.size() != live.size()) reorder(keep_rows);
    live = std::move(next_live);
    last = std::move(next_last);
  }
  for (auto& h : out) h.score = normalized_score(h.logprob, h.tokens.size(), cfg.length_penalty);
  return out;
}

/// Beam search with length-normalized scores. Per example, search stops once
/// num_beams hypotheses have finished; hypotheses alive at max_len are
/// finalized without eos.
template <typename T>
std::vector<Hypothesis> beam_search(int batch, const std::vector<Token>& first_tokens, const StepFn<T>& step,
                                    const ReorderFn& reorder, const std::vector<const LogitMask*>& masks,
                                    const GenerationConfig& cfg) {
  cfg.validate();
  const int k = cfg.num_beams;
  struct Live {
    int example;
    Hypothesis hyp;
  };
  std::vector<Live> live;
  for (int b = 0; b < batch; ++b) live.push_back({b, {}});
  std::vector<std::vector<Hypothesis>> finished(static_cast<std::size_t>(batch));
  std::vector<Token> last = first_tokens;

  for (int t = 0; t < cfg.max_len && !live.empty(); ++t) {
    Mat<T> logits = step(last);
    struct Cand {
      int row;
      Token tok;
      double logprob;
    };
    std::vector<std::vector<Cand>> per_example(static_cast<std::size_t>(batch));
    for (std::size_t r = 0; r < live.size(); ++r) {
      const Live& l = live[r];
      RowVec<T> c = constrained_logits<T>(logits.row(static_cast<Eigen::Index>(r)), l.hyp.tokens,
                                          masks[static_cast<std::size_t>(l.example)], cfg);
      RowVec<double> lp = log_softmax<T>(c);
      // top 2k continuations of this row suffice to fill k live + k finished
      std::vector<int> idx(static_cast<std::size_t>(lp.size()));
      std::iota(idx.begin(), idx.end(), 0);
      const int take = std::min<int>(2 * k, static_cast<int>(idx.size()));
      std::partial_sort(idx.begin(), idx.begin() + take, idx.end(), [&](int a, int b2) {
        return lp[a] != lp[b2] ? lp[a] > lp[b2] : a < b2;
      });
      for (int j = 0; j < take; ++j) {
        if (c[idx[j]] <= kNegSentinel<T> / 2) continue;
        per_example[static_cast<std::size_t>(l.example)].push_back(
            {static_cast<int>(r), static_cast<Token>(idx[j]), l.hyp.logprob + lp[idx[j]]});
      }
    }
    std::vector<Live> next;
    std::vector<int> parents;
    std::vector<Token> next_last;
    for (int b = 0; b < batch; ++b) {
      auto& cands = per_example[static_cast<std::size_t>(b)];
      if (cands.empty()) continue;
      std::stable_sort(cands.begin(), cands.end(), [](const Cand& x, const Cand& y) { return x.logprob > y.logprob; });
      auto& fin = finished[static_cast<std::size_t>(b)];
      int added = 0;
      for (const Cand& c : cands) {
        if (static_cast<int>(fin.size()) >= k || added >= k) break;
        Hypothesis h = live[static_cast<std::size_t>(c.row)].hyp;
        h.tokens.push_back(c.tok);
        h.logprob = c.logprob;
        if (c.tok == Vocabulary::kEos) {
          h.score = normalized_score(h.logprob, h.tokens.size(), cfg.length_penalty);
          fin.push_back(std::move(h));
        } else {
          next.push_back({b, std::move(h)});
          parents.push_back(c.row);
          next_last.push_back(c.tok);
          ++added;
        }
      }
      if (static_cast<int>(fin.size()) >= k) {
        // example done: drop its live rows
        for (std::size_t i = next.size(); i-- > 0;) {
          if (next[i].example != b) break;
          next.erase(next.begin() + static_cast<std::ptrdiff_t>(i));
          parents.erase(parents.begin() + static_cast<std::ptrdiff_t>(i));
          next_last.erase(next_last.begin() + static_cast<std::ptrdiff_t>(i));
        }
      }
    }
    if (next.empty()) {
      live.clear();
      break;
    }
    reorder(parents);
    live = std::move(next);
    last = std::move(next_last);
  }
  for (auto& l : live) {
    l.hyp.score = normalized_score(l.hyp.logprob, l.hyp.tokens.size(), cfg.length_penalty);
    finished[static_cast<std::size_t>(l.example)].push_back(std::move(l.hyp));
  }
  std::vector<Hypothesis> out(static_cast<std::size_t>(batch));
  for (int b = 0; b < batch; ++b) {
    const auto& fin = finished[static_cast<std::size_t>(b)];
    if (fin.empty()) continue;
    out[static_cast<std::size_t>(b)] =
        *std::max_element(fin.begin(), fin.end(), [](const Hypothesis& x, const Hypothesis& y) { return x.score < y.score; });
  }
  return out;
}

/// Strips a trailing eos.
inline Sentence strip_eos(Sentence s) {
  if (!s.empty() && s.back() == Vocabulary::kEos) s.pop_back();
  return s;
}

enum class DecodeMode { kGreedy, kBeam };

/// Translation-style decoding with the model: encodes nothing itself, runs on
/// an already-encoded batch. Beam mode returns the better (by normalized
/// score) of the beam winner and the greedy hypothesis.
template <typename T>
std::vector<Hypothesis> generate(const Seq2Seq<T>& model, const EncodedBatch<T>& memory,
                                 const std::vector<LangId>& target_langs, const std::vector<const LogitMask*>& masks,
                                 const GenerationConfig& cfg, DecodeMode mode) {
  cfg.validate();
  if (memory.batch == 0 || memory.len == 0) throw std::invalid_argument("generate: empty memory");
  if (static_cast<int>(target_langs.size()) != memory.batch || masks.size() != target_langs.size())
    throw std::invalid_argument("generate: batch mismatch");
  std::vector<Token> first;
  for (LangId l : target_langs) first.push_back(model.vocab().control_token(l));
  auto run = [&](DecodeMode m) {
    std::vector<int> rows(static_cast<std::size_t>(memory.batch));
    std::iota(rows.begin(), rows.end(), 0);
    IncrementalDecoder<T> dec(model, memory, rows);
    StepFn<T> step = [&dec](const std::vector<Token>& toks) { return dec.step(toks); };
    ReorderFn reorder = [&dec](const std::vector<int>& p) { dec.reorder(p); };
    return m == DecodeMode::kGreedy || cfg.num_beams == 1 ? greedy_search<T>(memory.batch, first, step, reorder, masks, cfg)
                                                          : beam_search<T>(memory.batch, first, step, reorder, masks, cfg);
  };
  std::vector<Hypothesis> out = run(mode);
  if (mode == DecodeMode::kBeam && cfg.num_beams > 1) {
    std::vector<Hypothesis> greedy = run(DecodeMode::kGreedy);
    for (std::size_t i = 0; i < out.size(); ++i)
      if (greedy[i].score > out[i].score) out[i] = std::move(greedy[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Straight-through Gumbel-Softmax

template <typename T>
struct GumbelSample {
  Var one_hot;  // forward: exact one-hot rows; backward: relaxed softmax path
  Mat<T> soft;  // softmax((logits + noise) / tau)
};

/// Standard Gumbel noise -log(-log(u)); a disabled sampler yields zeros.
template <typename T>
Mat<T> gumbel_noise(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, bool enabled = true) {
  Mat<T> g = Mat<T>::Zero(rows, cols);
  if (!enabled) return g;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    double x = u(rng);
    x = std::min(std::max(x, 1e-12), 1.0 - 1e-12);
    g.data()[i] = static_cast<T>(-std::log(-std::log(x)));
  }
  return g;
}

template <typename T>
GumbelSample<T> gumbel_st_sample(Graph<T>& g, Var logits, double tau, std::mt19937_64& rng, bool noise = true) {
  const Mat<T>& L = g.value(logits);
  Mat<T> n = gumbel_noise<T>(L.rows(), L.cols(), rng, noise);
  GumbelSample<T> s;
  s.one_hot = g.gumbel_straight_through(logits, n, static_cast<T>(tau), &s.soft);
  return s;
}

/// Emergent message for a batch. Step t holds one row per example; rows of
/// examples that already emitted eos are carried but ignored.
template <typename T>
struct Message {
  std::vector<Sentence> hard_tokens;  // per example, ends at first eos (inclusive) or max_len
  std::vector<Var> one_hots;          // per step, batch x |V|
  std::vector<Var> raw_logits;        // per step, batch x |V|, before constraints
  std::vector<LangId> langs;
  int steps = 0;

  int length(int b) const { return static_cast<int>(hard_tokens[static_cast<std::size_t>(b)].size()); }
};

/// Decoder inputs for a message prefix: control token row then the embedded
/// one-hot rows of steps [0, upto). Returns unscaled (batch*(upto+1)) x d rows.
template <typename T>
Var message_decoder_inputs(Graph<T>& g, const Seq2Seq<T>& model, const Message<T>& msg, int upto) {
  const int B = static_cast<int>(msg.langs.size());
  std::vector<int> ctrl;
  for (LangId l : msg.langs) ctrl.push_back(model.vocab().control_token(l));
  std::vector<Var> parts{model.embed(g, ctrl)};
  Var E = model.embedding(g);
  for (int s = 0; s < upto; ++s) parts.push_back(g.matmul(msg.one_hots[static_cast<std::size_t>(s)], E));
  Var stacked = g.concat_rows(parts);  // step-major: row s*B + b
  const int len = upto + 1;
  std::vector<int> order(static_cast<std::size_t>(B * len));
  for (int b = 0; b < B; ++b)
    for (int s = 0; s < len; ++s) order[static_cast<std::size_t>(b * len + s)] = s * B + b;
  return g.gather_rows(stacked, order);
}

/// Differentiable message generation from cross-attention memory. Each step
/// re-runs the decoder over the embedded one-hot prefix so gradients reach
/// the sender through every emitted token.
template <typename T>
Message<T> generate_gumbel(Graph<T>& g, const Seq2Seq<T>& model, const Memory& memory,
                           const std::vector<LangId>& langs, const std::vector<const LogitMask*>& masks,
                           const GenerationConfig& cfg, std::mt19937_64& rng, bool noise = true) {
  cfg.validate();
  if (memory.batch == 0 || memory.len == 0) throw std::invalid_argument("generate: empty memory");
  const int B = memory.batch;
  if (static_cast<int>(langs.size()) != B || masks.size() != langs.size())
    throw std::invalid_argument("generate: batch mismatch");
  Message<T> msg;
  msg.langs = langs;
  msg.hard_tokens.assign(static_cast<std::size_t>(B), {});
  std::vector<char> done(static_cast<std::size_t>(B), 0);
  for (int t = 0; t < cfg.max_len; ++t) {
    Var rows = message_decoder_inputs(g, model, msg, t);
    Var logits_all = model.decode_embedded(g, memory, rows, B, t + 1);
    std::vector<int> last;
    for (int b = 0; b < B; ++b) last.push_back(b * (t + 1) + t);
    Var raw = g.gather_rows(logits_all, last);
    const Mat<T>& rv = g.value(raw);
    Mat<T> mult(B, rv.cols());
    std::vector<char> allowed;
    allowed.reserve(static_cast<std::size_t>(rv.size()));
    for (int b = 0; b < B; ++b) {
      Constraint<T> c = make_constraint<T>(rv.row(b), msg.hard_tokens[static_cast<std::size_t>(b)],
                                           masks[static_cast<std::size_t>(b)], cfg);
      mult.row(b) = c.multiplier;
      allowed.insert(allowed.end(), c.allowed.begin(), c.allowed.end());
    }
    Var constrained = g.constrain(raw, std::move(mult), std::move(allowed));
    GumbelSample<T> s = gumbel_st_sample(g, constrained, cfg.temperature_tau, rng, noise);
    msg.one_hots.push_back(s.one_hot);
    msg.raw_logits.push_back(raw);
    msg.steps = t + 1;
    const Mat<T>& oh = g.value(s.one_hot);
    bool all_done = true;
    for (int b = 0; b < B; ++b) {
      if (done[static_cast<std::size_t>(b)]) continue;
      Eigen::Index arg = 0;
      oh.row(b).maxCoeff(&arg);
      msg.hard_tokens[static_cast<std::size_t>(b)].push_back(static_cast<Token>(arg));
      if (arg == Vocabulary::kEos) done[static_cast<std::size_t>(b)] = 1;
      all_done = all_done && done[static_cast<std::size_t>(b)];
    }
    if (all_done) break;
  }
  return msg;
}

}  // namespace ecft

#endif  // ECFT_GENERATION_HPP
