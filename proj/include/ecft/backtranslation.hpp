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

// On-the-fly iterative backtranslation.

#ifndef ECFT_BACKTRANSLATION_HPP
#define ECFT_BACKTRANSLATION_HPP

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

struct BtSchedule {
  int steps_per_direction = 8192;
  double mask_p_initial = 0.9;
  double mask_p_after = 0.99;
  int switch_step = 2048;
  double peak_lr = 2e-5;
  int warmup_steps = 1024;
  double clip_norm = 0.5;
  int batch_size = 32;
  GenerationConfig gen = GenerationConfig::backtranslation();
  int eval_every = 256;

  void validate() const {
    if (steps_per_direction < 0) throw std::invalid_argument("steps_per_direction must be >= 0");
    if (switch_step < 0 || switch_step > std::max(steps_per_direction, 0))
      throw std::invalid_argument("switch_step must lie in [0, steps_per_direction]");
    if (!(mask_p_initial > 0.0 && mask_p_initial <= mask_p_after && mask_p_after <= 1.0))
      throw std::invalid_argument("mask thresholds must satisfy 0 < initial <= after <= 1");
    if (!(peak_lr > 0.0)) throw std::invalid_argument("peak_lr must be positive");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (eval_every < 0) throw std::invalid_argument("eval_every must be >= 0");
    gen.validate();
  }

  /// Mask threshold at a 0-based per-direction step.
  double mask_p_at(int step) const { return step < switch_step ? mask_p_initial : mask_p_after; }

  LrSchedule lr_schedule() const {
    return LrSchedule{ScheduleShape::kWarmupLinearDecay, peak_lr, warmup_steps, steps_per_direction};
  }
};

struct BtStepResult {
  double loss = 0.0;
  double mask_p = 0.0;
  double lr = 0.0;
  double grad_norm = 0.0;
  std::vector<Sentence> synthetic;
};

/// Synthesizes sources in `lang_x` for real `batch_y` sentences with
/// gradient-free masked beam search, then takes one supervised step on
/// synthetic x -> real y.
template <typename T>
BtStepResult bt_step(Seq2Seq<T>& model, Adam<T>& opt, const std::vector<Sentence>& batch_y, LangId lang_y,
                     LangId lang_x, MaskBank& masks, const BtSchedule& sched, int step) {
  if (batch_y.empty()) throw std::invalid_argument("bt_step: empty batch");
  const Vocabulary& vocab = model.vocab();
  for (const auto& s : batch_y)
    for (Token t : s)
      if (vocab.is_special(t) || !vocab.usable_by(t, lang_y))
        throw std::invalid_argument("bt_step: batch sentence not in the target language");

  BtStepResult r;
  r.mask_p = sched.mask_p_at(step);
  r.lr = sched.lr_schedule().at(step);
  const std::size_t n = batch_y.size();
  const std::vector<LangId> ys(n, lang_y);
  const std::vector<LangId> xs(n, lang_x);
  {
    const EncodedBatch<T> enc = encode_values(model, batch_y, ys);
    GenerationConfig gen = sched.gen;
    gen.mask_p = r.mask_p;
    const LogitMask* mask = gen.use_mask ? &masks.get(lang_x, r.mask_p) : nullptr;
    const std::vector<const LogitMask*> mask_rows(n, mask);
    for (auto& h : generate(model, enc, xs, mask_rows, gen, DecodeMode::kBeam))
      r.synthetic.push_back(strip_eos(std::move(h.tokens)));
  }
  Graph<T> g;
  Memory mem = model.encode(g, r.synthetic, xs);
  auto tf = model.decode_teacher_forced(g, mem, batch_y, ys);
  Var loss = g.cross_entropy(tf.logits, tf.targets, -1);
  g.backward(loss);
  r.loss = static_cast<double>(g.scalar(loss));
  r.grad_norm = opt.step(model.params(), r.lr, sched.clip_norm);
  return r;
}

struct BtEvent {
  int step = 0;  // per-direction steps completed
  Direction direction = Direction::kAtoB;
  BtStepResult result;
};

struct BtRoundMetrics {
  int steps_a_to_b = 0;
  int steps_b_to_a = 0;
  std::vector<double> loss_a_to_b;
  std::vector<double> loss_b_to_a;
};

/// Runs steps_per_direction steps in each direction, alternating every step
/// (A->B trains on real B sentences, then B->A on real A sentences).
/// `on_eval` fires after every eval_every completed per-direction steps.
template <typename T>
BtRoundMetrics bt_round(Seq2Seq<T>& model, const MonolingualCorpus& corpus_a, const MonolingualCorpus& corpus_b,
                        MaskBank& masks, const BtSchedule& sched, std::mt19937_64& rng,
                        const std::function<void(const BtEvent&)>& on_step = nullptr,
                        const std::function<void(int)>& on_eval = nullptr) {
  sched.validate();
  if (corpus_a.sentences.empty() || corpus_b.sentences.empty())
    throw std::invalid_argument("bt_round: empty monolingual corpus");
  Adam<T> opt;
  BtRoundMetrics m;
  for (int step = 0; step < sched.steps_per_direction; ++step) {
    for (Direction dir : {Direction::kAtoB, Direction::kBtoA}) {
      const bool to_b = dir == Direction::kAtoB;
      const MonolingualCorpus& real = to_b ? corpus_b : corpus_a;
      const LangId synth_lang = to_b ? corpus_a.lang_id : corpus_b.lang_id;
      auto batch = sample_batch(real.sentences, sched.batch_size, rng);
      BtEvent ev{step + 1, dir, bt_step(model, opt, batch, real.lang_id, synth_lang, masks, sched, step)};
      (to_b ? m.loss_a_to_b : m.loss_b_to_a).push_back(ev.result.loss);
      ++(to_b ? m.steps_a_to_b : m.steps_b_to_a);
      if (on_step) on_step(ev);
    }
    if (on_eval && sched.eval_every > 0 && (step + 1) % sched.eval_every == 0) on_eval(step + 1);
  }
  return m;
}

}  // namespace ecft

#endif  // ECFT_BACKTRANSLATION_HPP
