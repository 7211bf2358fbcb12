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

#ifndef ECFT_EVAL_HPP
#define ECFT_EVAL_HPP

#include <algorithm>
#include <random>
#include <stdexcept>
#include <vector>

#include "ecft/bleu.hpp"
#include "ecft/ec_games.hpp"
#include "ecft/generation.hpp"
#include "ecft/incremental.hpp"
#include "ecft/model.hpp"
#include "ecft/pretrain.hpp"
#include "ecft/synth_world.hpp"

namespace ecft {

struct EvalResult {
  LangId src_lang = 0;
  LangId tgt_lang = 0;
  double bleu = 0.0;
  int n_examples = 0;
  std::vector<Sentence> hypotheses;
};

/// Translates every source with masked decoding (beam mode when
/// gen.num_beams > 1) and scores against the oracle references.
template <typename T>
EvalResult evaluate_translation(const Seq2Seq<T>& model, const std::vector<ParallelExample>& eval_set, LangId src_lang,
                                LangId tgt_lang, MaskBank& masks, const GenerationConfig& gen, int chunk = 64) {
  if (eval_set.empty()) throw std::invalid_argument("evaluate_translation: empty eval set");
  EvalResult r;
  r.src_lang = src_lang;
  r.tgt_lang = tgt_lang;
  r.n_examples = static_cast<int>(eval_set.size());
  const LogitMask* mask = gen.use_mask ? &masks.get(tgt_lang, gen.mask_p) : nullptr;
  std::vector<Sentence> refs;
  for (std::size_t i = 0; i < eval_set.size(); i += static_cast<std::size_t>(chunk)) {
    const std::size_t end = std::min(eval_set.size(), i + static_cast<std::size_t>(chunk));
    std::vector<Sentence> srcs;
    for (std::size_t j = i; j < end; ++j) {
      srcs.push_back(eval_set[j].src);
      refs.push_back(eval_set[j].ref);
    }
    const std::size_t n = srcs.size();
    const EncodedBatch<T> enc = encode_values(model, srcs, std::vector<LangId>(n, src_lang));
    auto hyps = generate(model, enc, std::vector<LangId>(n, tgt_lang), std::vector<const LogitMask*>(n, mask), gen,
                         gen.num_beams > 1 ? DecodeMode::kBeam : DecodeMode::kGreedy);
    for (auto& h : hyps) r.hypotheses.push_back(strip_eos(std::move(h.tokens)));
  }
  r.bleu = corpus_bleu(r.hypotheses, refs);
  return r;
}

/// Fraction of held-out games won when messages are generated without noise
/// (greedy under the game's constraints).
template <typename T>
double communication_accuracy(const Seq2Seq<T>& model, const std::vector<ImageRecord>& images, const GameConfig& cfg,
                              const std::vector<LangId>& message_langs, LangId caption_lang, MaskBank& masks,
                              int num_games, std::mt19937_64& rng, int chunk = 32) {
  if (cfg.num_candidates > static_cast<int>(images.size()))
    throw std::invalid_argument("communication_accuracy: more candidates than evaluation images");
  if (num_games < 1) throw std::invalid_argument("communication_accuracy: num_games must be >= 1");
  int hits = 0;
  for (int done = 0; done < num_games; done += chunk) {
    const int n = std::min(chunk, num_games - done);
    EcBatch<T> batch = make_ec_batch<T>(images, n, cfg.num_candidates, cfg.variant, message_langs, caption_lang, rng);
    Graph<T> g(false);
    Message<T> msg = sender_generate(g, model, batch, masks, cfg, rng, false);
    Var scores = receiver_score(g, model, msg, batch.candidates, batch.num_candidates, cfg);
    hits += static_cast<int>(std::lround(selection_accuracy(g.value(scores), batch.target_index) * n));
  }
  return static_cast<double>(hits) / static_cast<double>(num_games);
}

/// Mean per-token KL between the sender and the reference LM over noise-free
/// continuations of the given sender prompts.
template <typename T>
double drift_metric(const Seq2Seq<T>& model, const ReferenceLM<T>& reference, const EcBatch<T>& prompts,
                    MaskBank& masks, const GameConfig& cfg) {
  if (prompts.size() == 0) throw std::invalid_argument("drift_metric: empty prompt set");
  Graph<T> g(false);
  std::mt19937_64 unused(0);
  Message<T> msg = sender_generate(g, model, prompts, masks, cfg, unused, false);
  return static_cast<double>(g.scalar(kl_regularizer(g, msg, reference, masks, cfg.mask_p, cfg.kl_direction)));
}

}  // namespace ecft

#endif  // ECFT_EVAL_HPP
