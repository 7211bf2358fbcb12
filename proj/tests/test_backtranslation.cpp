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

#include "ecft/backtranslation.hpp"
#include "ecft/synth_world.hpp"

namespace ecft {
namespace {

TEST(LrSchedule, WarmupThenDecayToZeroAtFinalStep) {
  const LrSchedule s{ScheduleShape::kWarmupLinearDecay, 2e-5, 1024, 8192};
  EXPECT_EQ(s.at(0), 0.0);
  EXPECT_DOUBLE_EQ(s.at(512), 1e-5);
  EXPECT_DOUBLE_EQ(s.at(1024), 2e-5);
  EXPECT_DOUBLE_EQ(s.at(4000), 2e-5 * (1.0 - 2976.0 / 7167.0));
  EXPECT_EQ(s.at(8191), 0.0);
  EXPECT_EQ(s.at(9000), 0.0);
  for (int t = 1024; t < 8191; ++t) EXPECT_LE(s.at(t + 1), s.at(t));
  EXPECT_THROW(s.at(-1), std::invalid_argument);
}

TEST(LrSchedule, LinearDecayStartsAtPeak) {
  const LrSchedule s{ScheduleShape::kLinearDecay, 6e-6, 0, 2048};
  EXPECT_EQ(s.at(0), 6e-6);
  EXPECT_EQ(s.at(2047), 0.0);
  EXPECT_DOUBLE_EQ(s.at(1023), 6e-6 * (1.0 - 1023.0 / 2047.0));
  EXPECT_EQ((LrSchedule{ScheduleShape::kLinearDecay, 1e-3, 0, 1}.at(0)), 1e-3);
  EXPECT_EQ((LrSchedule{ScheduleShape::kConstant, 1e-3, 0, 10}.at(9)), 1e-3);
}

TEST(BtSchedule, MaskThresholdSwitchesAfter2048Steps) {
  BtSchedule s;
  EXPECT_EQ(s.mask_p_at(0), 0.9);
  EXPECT_EQ(s.mask_p_at(2047), 0.9);
  EXPECT_EQ(s.mask_p_at(2048), 0.99);
  EXPECT_EQ(s.mask_p_at(8191), 0.99);
  EXPECT_NO_THROW(s.validate());
}

TEST(BtSchedule, ValidationRejectsInconsistentSettings) {
  BtSchedule s;
  s.switch_step = 9000;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = BtSchedule{};
  s.mask_p_initial = 0.995;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = BtSchedule{};
  s.peak_lr = 0;
  EXPECT_THROW(s.validate(), std::invalid_argument);
}

class BtTest : public ::testing::Test {
 protected:
  void SetUp() override {
    pv_ = gen_language_pair(2, 16, ReorderRule::identity());
    a_ = gen_monolingual_corpus(pv_.pair, 0, 200, 1);
    b_ = gen_monolingual_corpus(pv_.pair, 1, 200, 2);
    masks_ = MaskBank(pv_.vocab);
    masks_.set_counts(0, count_tokens(a_.sentences));
    masks_.set_counts(1, count_tokens(b_.sentences));
    ModelConfig mc;
    mc.d_model = 16;
    mc.heads = 2;
    mc.ff_dim = 16;
    mc.enc_layers = 1;
    mc.dec_layers = 1;
    mc.feature_dim = 4;
    mc.adapter_len = 2;
    model_ = Seq2Seq<float>(mc, pv_.vocab);
    sched_.steps_per_direction = 3;
    sched_.switch_step = 2;
    sched_.warmup_steps = 1;
    sched_.peak_lr = 1e-3;
    sched_.batch_size = 4;
    sched_.gen.max_len = 8;
    sched_.gen.num_beams = 2;
    sched_.eval_every = 2;
  }
  PairWithVocab pv_;
  MonolingualCorpus a_, b_;
  MaskBank masks_;
  Seq2Seq<float> model_;
  BtSchedule sched_;
};

TEST_F(BtTest, SyntheticSourcesRespectTheSourceMask) {
  Adam<float> opt;
  const std::vector<Sentence> y(b_.sentences.begin(), b_.sentences.begin() + 4);
  const BtStepResult r = bt_step(model_, opt, y, 1, 0, masks_, sched_, 0);
  ASSERT_EQ(r.synthetic.size(), 4u);
  EXPECT_EQ(r.mask_p, 0.9);
  EXPECT_EQ(r.lr, 0.0);
  const LogitMask& m = masks_.get(0, 0.9);
  for (const auto& s : r.synthetic)
    for (Token t : s) {
      EXPECT_TRUE(m.allows(t));
      EXPECT_NE(t, Vocabulary::kEos);
    }
  EXPECT_GT(r.loss, 0.0);
}

TEST_F(BtTest, RejectsBatchesInTheWrongLanguage) {
  Adam<float> opt;
  EXPECT_THROW(bt_step(model_, opt, {a_.sentences[0]}, 1, 0, masks_, sched_, 0), std::invalid_argument);
  EXPECT_THROW(bt_step(model_, opt, {}, 1, 0, masks_, sched_, 0), std::invalid_argument);
}

TEST_F(BtTest, RoundAlternatesDirectionsAndFiresEvals) {
  std::mt19937_64 rng(1);
  std::vector<std::pair<int, Direction>> seen;
  std::vector<int> evals;
  const auto m = bt_round(
      model_, a_, b_, masks_, sched_, rng, [&](const BtEvent& e) { seen.emplace_back(e.step, e.direction); },
      [&](int step) { evals.push_back(step); });
  EXPECT_EQ(m.steps_a_to_b, 3);
  EXPECT_EQ(m.steps_b_to_a, 3);
  ASSERT_EQ(seen.size(), 6u);
  for (std::size_t i = 0; i < seen.size(); ++i) {
    EXPECT_EQ(seen[i].first, static_cast<int>(i / 2) + 1);
    EXPECT_EQ(seen[i].second, i % 2 == 0 ? Direction::kAtoB : Direction::kBtoA);
  }
  EXPECT_EQ(evals, std::vector<int>{2});
}

TEST_F(BtTest, RoundIsDeterministicPerSeed) {
  Seq2Seq<float> other = model_;
  std::mt19937_64 r1(5), r2(5);
  bt_round(model_, a_, b_, masks_, sched_, r1);
  bt_round(other, a_, b_, masks_, sched_, r2);
  EXPECT_EQ(model_.params().checksum(), other.params().checksum());
}

}  // namespace
}  // namespace ecft
