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

#include <fstream>
#include <sstream>

#include "ecft/pipeline.hpp"
#include "ecft/report.hpp"
#include "test_util.hpp"

namespace ecft {
namespace {

std::vector<StageKind> kinds(const PipelineSpec& p) {
  std::vector<StageKind> k;
  for (const auto& s : p.stages) k.push_back(s.kind);
  return k;
}

TEST(BuildPipeline, StageListsAtFullScale) {
  using K = StageKind;
  const auto base = build_pipeline(Arm::kBaseline);
  const auto i2i = build_pipeline(Arm::kI2I);
  const auto t2i = build_pipeline(Arm::kT2I);
  EXPECT_EQ(kinds(base), (std::vector<K>{K::kBacktranslation}));
  EXPECT_EQ(kinds(i2i), (std::vector<K>{K::kBacktranslation, K::kGrounding, K::kEc, K::kBacktranslation}));
  EXPECT_EQ(kinds(t2i), (std::vector<K>{K::kGrounding, K::kEc, K::kBacktranslation}));
  EXPECT_EQ(base.stages[0].steps, 8192);
  EXPECT_EQ(i2i.stages[0].steps, 2048);
  EXPECT_EQ(i2i.stages[1].steps, 2048);
  EXPECT_EQ(i2i.stages[2].steps, 2048);
  EXPECT_EQ(i2i.stages[3].steps, 6144);
  EXPECT_EQ(t2i.stages[0].steps, 2048);
  EXPECT_EQ(t2i.stages[2].steps, 8192);
}

TEST(BuildPipeline, HyperparametersPerArm) {
  const auto i2i = build_pipeline(Arm::kI2I);
  const auto t2i = build_pipeline(Arm::kT2I);
  EXPECT_EQ(build_pipeline(Arm::kBaseline).stages[0].lr, 2e-5);
  EXPECT_EQ(i2i.stages[1].lr, 4e-5);
  EXPECT_EQ(i2i.stages[1].clip_norm, 1.0);
  EXPECT_EQ(i2i.stages[2].lr, 6e-6);
  EXPECT_EQ(i2i.stages[2].game.num_candidates, 16);
  EXPECT_EQ(i2i.stages[2].game.lambda_kl, 0.125);
  EXPECT_EQ(i2i.stages[2].game.mask_p, 0.95);
  EXPECT_EQ(t2i.stages[0].clip_norm, 0.5);
  EXPECT_EQ(t2i.stages[1].lr, 1e-6);
  EXPECT_EQ(t2i.stages[1].game.lambda_kl, 0.0625);
  EXPECT_EQ(t2i.stages[1].game.mask_p, 0.96);
  EXPECT_EQ(t2i.stages[2].lr, 1e-5);
  EXPECT_EQ(t2i.stages[2].bt.mask_p_initial, 0.96);
  for (const auto& p : {i2i, t2i})
    for (const auto& s : p.stages)
      if (s.kind == StageKind::kBacktranslation) {
        EXPECT_EQ(s.clip_norm, 0.5);
        EXPECT_EQ(s.bt.batch_size, 32);
        EXPECT_EQ(s.bt.mask_p_after, 0.99);
      }
}

TEST(BuildPipeline, EqualBacktranslationBudgetAtAnyScale) {
  for (double scale : {1.0, 0.5, 0.125, 1.0 / 3.0, 0.01, 1.0 / 1024, 0.0007, 2.0}) {
    PipelineOptions o;
    o.scale = scale;
    const int base = build_pipeline(Arm::kBaseline, o).total_bt_steps();
    EXPECT_EQ(build_pipeline(Arm::kI2I, o).total_bt_steps(), base) << scale;
    EXPECT_EQ(build_pipeline(Arm::kT2I, o).total_bt_steps(), base) << scale;
  }
  EXPECT_EQ(build_pipeline(Arm::kBaseline).total_bt_steps(), 8192);
  PipelineOptions bad;
  bad.scale = 0;
  EXPECT_THROW(build_pipeline(Arm::kI2I, bad), std::invalid_argument);
}

TEST(StageLr, ScheduleExamples) {
  const auto base = build_pipeline(Arm::kBaseline);
  EXPECT_DOUBLE_EQ(stage_lr(base.stages[0], 512), 1e-5);
  const auto i2i = build_pipeline(Arm::kI2I);
  EXPECT_EQ(stage_lr(i2i.stages[2], 0), 6e-6);
  for (const auto& p : {base, i2i, build_pipeline(Arm::kT2I)})
    for (const auto& s : p.stages) EXPECT_EQ(stage_lr(s, s.steps - 1), 0.0);
  PipelineOptions o;
  o.lr_scale = 50;
  EXPECT_DOUBLE_EQ(build_pipeline(Arm::kI2I, o).stages[2].lr, 3e-4);
}

TEST(StageOverrides, ApplyPerKind) {
  PipelineSpec p = build_pipeline(Arm::kI2I);
  apply_stage_overrides(p, Json{{"backtranslation", {{"batch_size", 8}, {"peak_lr", 1e-3}}},
                                {"ec", {{"lambda_kl", 0.0}, {"lr", 2e-4}}}});
  EXPECT_EQ(p.stages[0].bt.batch_size, 8);
  EXPECT_EQ(p.stages[3].lr, 1e-3);
  EXPECT_EQ(p.stages[2].game.lambda_kl, 0.0);
  EXPECT_EQ(p.stages[2].lr, 2e-4);
  EXPECT_EQ(p.stages[1].game.lambda_kl, 0.0);
  EXPECT_EQ(p.stages[1].lr, 4e-5);
}

TEST(PipelineSpecJson, RoundTrip) {
  PipelineOptions o;
  o.scale = 0.25;
  o.lr_scale = 3;
  PipelineSpec p = build_pipeline(Arm::kT2I, o);
  p.language = "lx";
  p.seed = 12;
  const PipelineSpec q = Json(p).get<PipelineSpec>();
  EXPECT_EQ(Json(q).dump(), Json(p).dump());
}

CheckpointRecord rec(double bleu) {
  CheckpointRecord r;
  r.mean_bleu = bleu;
  return r;
}

TEST(SelectBest, ArgmaxWithLaterTieBreak) {
  EXPECT_EQ(select_best({rec(3.1), rec(4.0), rec(3.9)}), 1u);
  EXPECT_EQ(select_best({rec(2.0), rec(4.0), rec(4.0)}), 2u);
  EXPECT_THROW(select_best({}), std::invalid_argument);
}

TEST(SelectBest, MatchesBruteForceArgmax) {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> v(0, 5);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<CheckpointRecord> rs;
    for (int i = 0; i < 1 + trial % 7; ++i) rs.push_back(rec(v(rng)));
    std::size_t expect = 0;
    for (std::size_t i = 0; i < rs.size(); ++i) {
      bool beaten = false;
      for (std::size_t j = 0; j < rs.size(); ++j)
        beaten = beaten || rs[j].mean_bleu > rs[i].mean_bleu || (rs[j].mean_bleu == rs[i].mean_bleu && j > i);
      if (!beaten) expect = i;
    }
    EXPECT_EQ(select_best(rs), expect);
  }
}

TEST(ResolveSeed, ReadsEnvironment) {
  unsetenv("ECFT_SEED");
  EXPECT_EQ(resolve_seed(7), 7u);
  setenv("ECFT_SEED", "42", 1);
  EXPECT_EQ(resolve_seed(7), 42u);
  setenv("ECFT_SEED", "x", 1);
  EXPECT_THROW(resolve_seed(7), std::invalid_argument);
  unsetenv("ECFT_SEED");
}

// ---- end-to-end on a tiny workspace -------------------------------------------

DeskConfig tiny_desk() {
  DeskConfig c;
  c.data.content_vocab = 16;
  c.data.tiers = {300, 100};
  c.data.val_size = 12;
  c.data.test_size = 12;
  c.data.axes = {{"color", 3}, {"shape", 2}, {"size", 2}};
  c.data.feature_dim = 8;
  c.model.d_model = 16;
  c.model.heads = 2;
  c.model.ff_dim = 16;
  c.model.enc_layers = 1;
  c.model.dec_layers = 1;
  c.model.feature_dim = 8;
  c.model.adapter_len = 3;
  c.pretrain.steps = 10;
  c.pretrain.batch_size = 8;
  c.reference_lm.steps = 4;
  c.reference_lm.batch_size = 8;
  c.pipeline.scale = 1.0 / 1024;  // 8 BT steps per direction, 2 game steps
  c.pipeline.lr_scale = 50;
  c.pipeline.eval_every = 2;
  c.stage_overrides = Json{{"backtranslation", {{"batch_size", 4}, {"max_len", 12}, {"num_beams", 2}}},
                           {"grounding", {{"batch_size", 4}}},
                           {"ec", {{"batch_size", 4}, {"generation", {{"max_len", 6}}}}}};
  return c;
}

class TinyPipelineTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = new std::filesystem::path(test::scratch_dir("pipeline"));
    ws_ = new Workspace<float>(prepare_workspace<float>(*root_ / "workspace", tiny_desk()));
  }
  static void TearDownTestSuite() {
    delete ws_;
    delete root_;
  }
  static std::string slurp(const std::filesystem::path& p) {
    std::ifstream is(p);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
  }
  static std::filesystem::path* root_;
  static Workspace<float>* ws_;
};
std::filesystem::path* TinyPipelineTest::root_ = nullptr;
Workspace<float>* TinyPipelineTest::ws_ = nullptr;

TEST_F(TinyPipelineTest, WorkspaceReloadsIdentically) {
  const Workspace<float> again = prepare_workspace<float>(*root_ / "workspace", tiny_desk());
  EXPECT_EQ(again.base.params().checksum(), ws_->base.params().checksum());
  EXPECT_EQ(again.reference.model().params().checksum(), ws_->reference.model().params().checksum());
  EXPECT_EQ(again.data.corpora[1].sentences, ws_->data.corpora[1].sentences);
  EXPECT_EQ(again.data.evals.at(1).test_forward.size(), 12u);
  EXPECT_EQ(again.data.masks.all_counts(), ws_->data.masks.all_counts());
}

TEST_F(TinyPipelineTest, EvalSetsAreDisjointFromTraining) {
  const DataBundle& d = ws_->data;
  for (const auto& [lang, e] : d.evals) {
    const std::set<Sentence> pivot(d.corpora[0].sentences.begin(), d.corpora[0].sentences.end());
    const std::set<Sentence> other(d.corpora[static_cast<std::size_t>(lang)].sentences.begin(),
                                   d.corpora[static_cast<std::size_t>(lang)].sentences.end());
    for (const auto& ex : e.test_forward) EXPECT_EQ(pivot.count(ex.src), 0u);
    for (const auto& ex : e.test_backward) EXPECT_EQ(other.count(ex.src), 0u);
  }
  std::set<int> train_ids;
  for (const auto& r : d.images_train) train_ids.insert(r.image_id);
  for (const auto& r : d.images_heldout) EXPECT_EQ(train_ids.count(r.image_id), 0u);
}

TEST_F(TinyPipelineTest, RunIsDeterministicAndSelectsTheLoggedArgmax) {
  const PipelineSpec spec = desk_pipeline(tiny_desk(), Arm::kI2I, 3);
  const RunResult a = run_pipeline(*ws_, spec, *root_ / "a");
  const RunResult b = run_pipeline(*ws_, spec, *root_ / "b");
  const auto da = *root_ / "a" / "i2i" / "3";
  EXPECT_EQ(slurp(da / "metrics.jsonl"), slurp(*root_ / "b" / "i2i" / "3" / "metrics.jsonl"));
  ASSERT_TRUE(a.best.has_value());
  ASSERT_EQ(a.records.size(), 4u);  // 2 BT steps then 6, evaluated every 2
  EXPECT_EQ(Json(*a.best).dump(), Json(a.records[select_best(a.records)]).dump());
  EXPECT_EQ(a.test_mean_bleu, b.test_mean_bleu);
  const Json best = read_json_file(da / "best.json");
  EXPECT_EQ(best.at("record").at("checkpoint"), a.best->checkpoint);
  EXPECT_TRUE(std::filesystem::exists(da / a.best->checkpoint));
}

TEST_F(TinyPipelineTest, ResumeFromStageBoundaryReproducesTheRun) {
  const PipelineSpec spec = desk_pipeline(tiny_desk(), Arm::kT2I, 5);
  run_pipeline(*ws_, spec, *root_ / "full");
  RunOptions stop;
  stop.stop_after_stages = 2;
  const RunResult partial = run_pipeline(*ws_, spec, *root_ / "split", stop);
  EXPECT_FALSE(partial.best.has_value());
  const auto split = *root_ / "split" / "t2i" / "5";
  EXPECT_EQ(read_json_file(split / "state.json").at("completed_stages"), 2);
  // a crash mid-stage leaves trailing log lines; resume must discard them
  detail::append_line(split / "metrics.jsonl", Json{{"event", "bt_step"}, {"stage", 2}});
  resume_pipeline(*ws_, split);
  EXPECT_EQ(slurp(split / "metrics.jsonl"), slurp(*root_ / "full" / "t2i" / "5" / "metrics.jsonl"));
  EXPECT_EQ(slurp(split / "best.json"), slurp(*root_ / "full" / "t2i" / "5" / "best.json"));
}

TEST_F(TinyPipelineTest, ArmsShareTheBacktranslationBudget) {
  for (Arm arm : {Arm::kBaseline, Arm::kI2I, Arm::kT2I})
    EXPECT_EQ(desk_pipeline(tiny_desk(), arm, 1).total_bt_steps(), 8);
}

// ---- io and report -------------------------------------------------------------

TEST(Io, CorpusParallelImagesAndCountsRoundTrip) {
  const auto dir = test::scratch_dir("io");
  const auto pv = gen_language_pair(2, 16, ReorderRule::swap_halves());
  const auto c = gen_monolingual_corpus(pv.pair, 1, 50, 3);
  write_corpus(dir / "c.jsonl", c, pv.vocab);
  const auto c2 = read_corpus(dir / "c.jsonl", pv.vocab);
  EXPECT_EQ(c2.sentences, c.sentences);
  EXPECT_EQ(c2.lang_id, 1);
  EXPECT_EQ(read_jsonl(dir / "c.jsonl").front().at("lang"), "b");

  const auto set = gen_parallel_set(pv.pair, Direction::kAtoB, 20, 4);
  write_parallel(dir / "p.jsonl", set, "a2b");
  const auto set2 = read_parallel(dir / "p.jsonl");
  ASSERT_EQ(set2.size(), set.size());
  for (std::size_t i = 0; i < set.size(); ++i) {
    EXPECT_EQ(set2[i].src, set[i].src);
    EXPECT_EQ(set2[i].ref, set[i].ref);
  }
  const auto world = gen_world(1, {{"x", 2}, {"y", 3}, {"z", 2}}, 8, pv.pair);
  const auto imgs = gen_image_dataset(world, 12, 2);
  write_images(dir / "i.jsonl", imgs);
  const auto imgs2 = read_images(dir / "i.jsonl");
  ASSERT_EQ(imgs2.size(), imgs.size());
  for (std::size_t i = 0; i < imgs.size(); ++i) {
    EXPECT_EQ(imgs2[i].features, imgs[i].features);
    EXPECT_EQ(imgs2[i].gold_caption, imgs[i].gold_caption);
    EXPECT_EQ(imgs2[i].attributes, imgs[i].attributes);
  }
  const std::map<LangId, std::map<Token, long long>> counts{{0, {{10, 4}, {11, 2}}}, {1, {{30, 1}}}};
  write_token_counts(dir / "t.jsonl", counts);
  EXPECT_EQ(read_token_counts(dir / "t.jsonl"), counts);
}

TEST(Report, FixtureReproducesHeadlineGains) {
  const ResultsTable t = paper_fixture_table();
  // Published relative gains of the text-to-image arm, in percent.
  EXPECT_NEAR(*t.relative_gain("t2i", "baseline", "ne->en"), 30.8, 0.05);
  EXPECT_NEAR(*t.relative_gain("t2i", "baseline", "en->zh"), 13.0, 0.05);
  EXPECT_NEAR(*t.relative_gain("t2i", "baseline", "en->ne"), 11.9, 0.05);
  EXPECT_NEAR(*t.relative_gain("t2i", "baseline", "en->de"), -2.1, 0.05);
  EXPECT_NEAR(*t.relative_gain("t2i", "baseline", "de->en"), -0.2, 0.05);
  // The prose rounds si->en to +11.9%; the table cells give +10.4%.
  EXPECT_NEAR(*t.relative_gain("t2i", "baseline", "si->en"), 10.4, 0.05);
  EXPECT_EQ(t.rows(), (std::vector<std::string>{"baseline", "i2i", "t2i"}));
  EXPECT_EQ(t.columns().size(), 8u);
}

TEST(Report, MediansMissingCellsAndFormatting) {
  ResultsTable t;
  t.add_row("baseline");
  t.add_row("t2i");
  t.add_column("en->lx");
  t.add_column("lx->en");
  for (double v : {3.0, 1.0, 2.0}) t.add("baseline", "en->lx", v);
  t.add("t2i", "en->lx", 4.0);
  EXPECT_EQ(*t.cell("baseline", "en->lx"), 2.0);
  EXPECT_EQ(t.count("baseline", "en->lx"), 3);
  EXPECT_FALSE(t.cell("t2i", "lx->en").has_value());
  EXPECT_FALSE(t.relative_gain("t2i", "baseline", "lx->en").has_value());
  EXPECT_DOUBLE_EQ(*t.relative_gain("t2i", "baseline", "en->lx"), 100.0);
  const std::string csv = t.to_csv();
  EXPECT_NE(csv.find("missing"), std::string::npos);
  EXPECT_NE(t.to_text().find("+100.0%"), std::string::npos);
  EXPECT_EQ(median({4.0, 1.0}), 2.5);
}

}  // namespace
}  // namespace ecft
