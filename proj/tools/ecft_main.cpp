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

// Command-line front end: data generation, pretraining, pipeline runs,
// checkpoint evaluation and reporting.

#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ecft/pipeline.hpp"
#include "ecft/report.hpp"
#include "plot_png.hpp"

namespace fs = std::filesystem;
using ecft::Json;
using Real = float;

namespace {

void say(const std::string& s) { std::cout << s << std::endl; }

ecft::DeskConfig load_config(const std::string& path) {
  if (path.empty()) return {};
  return ecft::read_json_file(path).get<ecft::DeskConfig>();
}

std::string direction_key(const std::string& a, const std::string& b) { return a + "2" + b; }

int cmd_gen_data(const std::string& config, const std::string& world, const std::string& pair,
                 std::optional<std::uint64_t> seed, const std::string& out) {
  ecft::DeskConfig cfg = load_config(config);
  Json data = cfg.data;
  if (!pair.empty()) data.update(ecft::read_json_file(pair));
  if (!world.empty()) data.update(ecft::read_json_file(world));
  ecft::DataConfig dc = data.get<ecft::DataConfig>();
  dc.seed = ecft::resolve_seed(seed.value_or(dc.seed));
  const ecft::DataBundle d = ecft::make_data(dc);
  ecft::save_data(out, d);
  for (const auto& c : d.corpora)
    say(d.vocab().language(c.lang_id).name + ": " + std::to_string(c.sentences.size()) + " sentences");
  say("images: " + std::to_string(d.images_train.size()) + " train, " + std::to_string(d.images_heldout.size()) +
      " held out");
  return 0;
}

int cmd_pretrain(const std::string& config, const std::string& data_dir, const std::string& out) {
  const ecft::DeskConfig cfg = load_config(config);
  ecft::DataBundle data = ecft::load_data(data_dir);
  say("denoising pretraining for " + std::to_string(cfg.pretrain.steps) + " steps");
  auto ws = ecft::pretrain_workspace<Real>(std::move(data), cfg.model, cfg.pretrain, cfg.reference_lm,
                                           [&](int step, double loss) {
                                             if ((step + 1) % 250 == 0)
                                               say("  step " + std::to_string(step + 1) + " loss " + std::to_string(loss));
                                           });
  ecft::save_workspace_models(out, ws);
  return 0;
}

int cmd_run(const std::string& arm_name, const std::string& config, std::optional<double> scale,
            std::optional<std::uint64_t> seed, const std::string& language, const std::string& out,
            std::string workspace, int stop_after) {
  ecft::DeskConfig cfg = load_config(config);
  if (scale) cfg.pipeline.scale = *scale;
  if (!language.empty()) cfg.language = language;
  const std::uint64_t run_seed = ecft::resolve_seed(seed.value_or(cfg.seed));
  if (workspace.empty()) workspace = (fs::path(out) / "workspace").string();
  const auto ws = ecft::prepare_workspace<Real>(workspace, cfg, say);
  const ecft::PipelineSpec spec = ecft::desk_pipeline(cfg, ecft::arm_from_string(arm_name), run_seed);
  ecft::RunOptions opt;
  opt.stop_after_stages = stop_after;
  opt.progress = say;
  opt.run_info = Json{{"workspace", fs::absolute(workspace).string()}};
  const ecft::RunResult r = ecft::run_pipeline(ws, spec, out, opt);
  if (r.best) {
    std::printf("selected stage %d step %d (val mean %.2f); test BLEU forward %.2f backward %.2f\n", r.best->stage,
                r.best->step, r.best->mean_bleu, r.test_bleu_forward, r.test_bleu_backward);
  } else {
    say("stopped before completion; continue with: resume --from " +
        (fs::path(out) / arm_name / std::to_string(run_seed)).string());
  }
  return 0;
}

int cmd_resume(const std::string& from) {
  const Json run = ecft::read_json_file(fs::path(from) / "run.json");
  const fs::path workspace = run.at("workspace").get<std::string>();
  const auto ws = ecft::load_workspace<Real>(workspace / "data", workspace / "pretrained");
  ecft::RunOptions opt;
  opt.progress = say;
  opt.run_info = Json{{"workspace", workspace.string()}};
  const ecft::RunResult r = ecft::resume_pipeline(ws, from, opt);
  if (r.best)
    std::printf("test BLEU forward %.2f backward %.2f\n", r.test_bleu_forward, r.test_bleu_backward);
  return 0;
}

int cmd_evaluate(const std::string& ckpt, const std::string& direction, const std::string& workspace,
                 const std::string& split, double mask_p, int beams) {
  const fs::path ws_dir = workspace;
  const auto ws = ecft::load_workspace<Real>(ws_dir / "data", ws_dir / "pretrained");
  const auto& d = ws.data;
  const auto sep = direction.find('2');
  if (sep == std::string::npos) throw std::invalid_argument("direction must look like <src>2<tgt>, e.g. en2hx");
  const ecft::LangId src = d.vocab().find(direction.substr(0, sep));
  const ecft::LangId tgt = d.vocab().find(direction.substr(sep + 1));
  const bool forward = src == d.pivot();
  const ecft::LangId other = forward ? tgt : src;
  if (!forward && tgt != d.pivot()) throw std::invalid_argument("one side of the direction must be the pivot language");
  const auto& e = d.evals.at(other);
  const auto& set = split == "val" ? (forward ? e.val_forward : e.val_backward)
                                   : (forward ? e.test_forward : e.test_backward);
  ecft::Seq2Seq<Real> model = ws.base;
  ecft::load_checkpoint(ckpt, model.params());
  ecft::GenerationConfig gen = ecft::GenerationConfig::backtranslation();
  gen.mask_p = mask_p;
  gen.num_beams = beams;
  ecft::MaskBank masks = d.masks;
  const auto r = ecft::evaluate_translation(model, set, src, tgt, masks, gen);
  std::printf("%s %s BLEU %.2f over %d sentences\n", direction.c_str(), split.c_str(), r.bleu, r.n_examples);
  return 0;
}

int cmd_report(const std::vector<std::string>& runs, bool fixture, const std::string& out) {
  fs::create_directories(out);
  ecft::ResultsTable table;
  ecft::CollectedRuns collected;
  if (fixture) {
    table = ecft::paper_fixture_table();
  } else {
    std::vector<fs::path> roots(runs.begin(), runs.end());
    collected = ecft::collect_runs(roots);
    if (collected.completed == 0 && collected.curves.empty()) throw std::runtime_error("report: no completed runs found");
    table = collected.table;
  }
  ecft::write_text_atomic(fs::path(out) / "results.csv", table.to_csv());
  ecft::write_text_atomic(fs::path(out) / "results.txt", table.to_text());
  std::cout << table.to_text();
  if (!collected.curves.empty()) {
    const fs::path curves = fs::path(out) / "curves";
    fs::create_directories(curves);
    for (const auto& [key, pts] : collected.curves) {
      const std::string stem = key.first + "_" + key.second;
      ecft::write_text_atomic(curves / (stem + ".csv"), ecft::curve_csv(pts));
      std::map<std::uint64_t, ecft::plot::Series> by_seed;
      for (const auto& p : pts) {
        by_seed[p.seed].x.push_back(p.bt_step);
        by_seed[p.seed].y.push_back(p.bleu);
      }
      std::vector<ecft::plot::Series> series;
      for (auto& [s, ser] : by_seed) series.push_back(std::move(ser));
      ecft::plot::line_chart(curves / (stem + ".png"), series);
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Emergent-communication fine-tuning for unsupervised translation on synthetic languages"};
  app.require_subcommand(1);

  std::string config, world, pair, out, data_dir, arm, workspace, from, ckpt, direction, language, split = "test";
  std::optional<std::uint64_t> seed;
  std::optional<double> scale;
  int stop_after = -1, beams = 5;
  double mask_p = 0.99;
  std::vector<std::string> runs;
  bool fixture = false;

  auto* gen = app.add_subcommand("gen-data", "generate corpora, evaluation sets and the image world");
  gen->add_option("--config", config, "desk config (JSON)");
  gen->add_option("--world", world, "image-world overrides (JSON)");
  gen->add_option("--pair", pair, "language-family overrides (JSON)");
  gen->add_option("--seed", seed, "data seed");
  gen->add_option("--out", out, "output directory")->required();

  auto* pre = app.add_subcommand("pretrain", "denoising pretraining and the reference LM");
  pre->add_option("--config", config, "desk config (JSON)");
  pre->add_option("--data", data_dir, "directory written by gen-data")->required();
  pre->add_option("--out", out, "output directory")->required();

  auto* run = app.add_subcommand("run-pipeline", "run one experimental arm");
  run->add_option("--arm", arm, "baseline, i2i or t2i")->required()->check(CLI::IsMember({"baseline", "i2i", "t2i"}));
  run->add_option("--config", config, "desk config (JSON)");
  run->add_option("--scale", scale, "step-count scale factor");
  run->add_option("--seed", seed, "run seed (ECFT_SEED takes precedence)");
  run->add_option("--language", language, "non-pivot language of the evaluated pair (default from config)");
  run->add_option("--out", out, "output root")->required();
  run->add_option("--workspace", workspace, "shared data and pretrained models (default <out>/workspace)");
  run->add_option("--stop-after-stages", stop_after, "stop after this many stages");

  auto* res = app.add_subcommand("resume", "continue a run from its last completed stage");
  res->add_option("--from", from, "run directory")->required();

  auto* ev = app.add_subcommand("evaluate", "BLEU of a checkpoint on held-out pairs");
  ev->add_option("--ckpt", ckpt, "checkpoint file")->required();
  ev->add_option("--direction", direction, "e.g. en2hx")->required();
  ev->add_option("--workspace", workspace, "workspace directory")->required();
  ev->add_option("--split", split, "val or test")->check(CLI::IsMember({"val", "test"}));
  ev->add_option("--mask-p", mask_p, "logit-mask threshold");
  ev->add_option("--beams", beams, "beam width");

  auto* rep = app.add_subcommand("report", "results table and validation curves");
  rep->add_option("--runs", runs, "run roots");
  rep->add_flag("--paper-fixture", fixture, "render the published numbers instead of runs");
  rep->add_option("--out", out, "output directory")->default_val("report");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*gen) return cmd_gen_data(config, world, pair, seed, out);
    if (*pre) return cmd_pretrain(config, data_dir, out);
    if (*run) return cmd_run(arm, config, scale, seed, language, out, workspace, stop_after);
    if (*res) return cmd_resume(from);
    if (*ev) return cmd_evaluate(ckpt, direction, workspace, split, mask_p, beams);
    if (*rep) {
      if (!fixture && runs.empty()) throw std::invalid_argument("report needs --runs or --paper-fixture");
      return cmd_report(runs, fixture, out);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 0;
}
