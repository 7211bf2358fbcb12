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

// Data bundles, stage lists of the three experimental arms, and the
// checkpointed stage runner.

#ifndef ECFT_PIPELINE_HPP
#define ECFT_PIPELINE_HPP

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "ecft/backtranslation.hpp"
#include "ecft/ec_games.hpp"
#include "ecft/eval.hpp"
#include "ecft/io.hpp"
#include "ecft/model.hpp"
#include "ecft/params.hpp"
#include "ecft/pretrain.hpp"
#include "ecft/synth_world.hpp"
#include "ecft/training.hpp"

namespace ecft {

// ===========================================================================
// Data

struct DataConfig {
  std::uint64_t seed = 1;
  int content_vocab = 48;
  /// Concepts spelled with one token shared by every language.
  int shared_tokens = 0;
  SamplerConfig sampler;
  std::vector<FamilyMember> members = {{"en", ResourceTier::kHigh, ReorderRule::identity()},
                                       {"hx", ResourceTier::kHigh, ReorderRule::identity()},
                                       {"lx", ResourceTier::kLow, ReorderRule::swap_halves()}};
  TierSizes tiers{20000, 2000};
  int val_size = 512;
  int test_size = 512;
  std::vector<AttributeAxis> axes = {{"color", 4}, {"shape", 4}, {"size", 4}};
  int feature_dim = 32;
  double jitter_sigma = 0.05;
  double heldout_image_fraction = 0.25;
};

inline void to_json(Json& j, const DataConfig& c) {
  j = Json{{"seed", c.seed},           {"content_vocab", c.content_vocab},
           {"shared_tokens", c.shared_tokens}, {"sampler", c.sampler},     {"members", c.members},
           {"high_tier_size", c.tiers.high}, {"low_tier_size", c.tiers.low},
           {"val_size", c.val_size},   {"test_size", c.test_size},
           {"axes", c.axes},           {"feature_dim", c.feature_dim},
           {"jitter_sigma", c.jitter_sigma}, {"heldout_image_fraction", c.heldout_image_fraction}};
}
inline void from_json(const Json& j, DataConfig& c) {
  detail::read_opt(j, "seed", c.seed);
  detail::read_opt(j, "content_vocab", c.content_vocab);
  detail::read_opt(j, "shared_tokens", c.shared_tokens);
  if (j.contains("sampler")) from_json(j.at("sampler"), c.sampler);
  if (j.contains("members")) c.members = j.at("members").get<std::vector<FamilyMember>>();
  detail::read_opt(j, "high_tier_size", c.tiers.high);
  detail::read_opt(j, "low_tier_size", c.tiers.low);
  detail::read_opt(j, "val_size", c.val_size);
  detail::read_opt(j, "test_size", c.test_size);
  if (j.contains("axes")) c.axes = j.at("axes").get<std::vector<AttributeAxis>>();
  detail::read_opt(j, "feature_dim", c.feature_dim);
  detail::read_opt(j, "jitter_sigma", c.jitter_sigma);
  detail::read_opt(j, "heldout_image_fraction", c.heldout_image_fraction);
}

struct PairEvalSets {
  std::vector<ParallelExample> val_forward, val_backward;  // pivot -> X, X -> pivot
  std::vector<ParallelExample> test_forward, test_backward;
};

/// Everything generated from a DataConfig. Language 0 is the pivot (the
/// caption language); every other member forms a pair with it.
struct DataBundle {
  DataConfig config;
  LanguageFamily family;
  std::vector<MonolingualCorpus> corpora;  // indexed by language id
  WorldSpec world;
  std::vector<ImageRecord> images_train;
  std::vector<ImageRecord> images_heldout;
  std::map<LangId, PairEvalSets> evals;
  MaskBank masks;

  const Vocabulary& vocab() const { return family.vocab; }
  LangId pivot() const { return family.pivot; }
  LangId find_language(const std::string& name) const {
    const LangId id = family.vocab.find(name);
    if (id == family.pivot) throw std::invalid_argument("the pivot language has no pair with itself: " + name);
    return id;
  }
  const LanguagePairSpec& pair(LangId other) const { return family.pair_for(other); }
};

inline DataBundle make_data(const DataConfig& cfg) {
  DataBundle d;
  d.config = cfg;
  d.family = gen_language_family(cfg.seed, cfg.content_vocab, cfg.members, cfg.sampler, cfg.shared_tokens);
  const auto& langs = d.family.vocab.languages();
  for (const auto& l : langs) {
    const LanguagePairSpec& p = d.family.pairs[static_cast<std::size_t>(l.id == d.family.pivot ? 0 : l.id - 1)];
    d.corpora.push_back(gen_monolingual_corpus(p, l.id, cfg.tiers.size_for(l.tier), cfg.seed, l.tier));
  }
  d.masks = MaskBank(d.family.vocab);
  for (const auto& c : d.corpora) d.masks.set_counts(c.lang_id, count_tokens(c.sentences));

  for (const auto& p : d.family.pairs) {
    std::set<Sentence> seen(d.corpora[static_cast<std::size_t>(p.lang_a_id)].sentences.begin(),
                            d.corpora[static_cast<std::size_t>(p.lang_a_id)].sentences.end());
    seen.insert(d.corpora[static_cast<std::size_t>(p.lang_b_id)].sentences.begin(),
                d.corpora[static_cast<std::size_t>(p.lang_b_id)].sentences.end());
    PairEvalSets e;
    const std::uint64_t s = detail::mix_seed(cfg.seed, 0x7E57 + static_cast<std::uint64_t>(p.lang_b_id));
    e.val_forward = gen_parallel_set(p, Direction::kAtoB, cfg.val_size, s, &seen);
    e.val_backward = gen_parallel_set(p, Direction::kBtoA, cfg.val_size, s, &seen);
    for (const auto& ex : e.val_forward) seen.insert(ex.src), seen.insert(ex.ref);
    for (const auto& ex : e.val_backward) seen.insert(ex.src), seen.insert(ex.ref);
    e.test_forward = gen_parallel_set(p, Direction::kAtoB, cfg.test_size, s + 1, &seen);
    e.test_backward = gen_parallel_set(p, Direction::kBtoA, cfg.test_size, s + 1, &seen);
    d.evals[p.lang_b_id] = std::move(e);
  }

  d.world = gen_world(cfg.seed, cfg.axes, cfg.feature_dim, d.family.pairs.front(), cfg.jitter_sigma);
  const int n = d.world.num_tuples();
  auto images = gen_image_dataset(d.world, n, cfg.seed);
  const int held = std::max(1, static_cast<int>(std::lround(n * cfg.heldout_image_fraction)));
  if (held >= n) throw std::invalid_argument("heldout_image_fraction leaves no training images");
  d.images_train.assign(images.begin(), images.end() - held);
  d.images_heldout.assign(images.end() - held, images.end());
  return d;
}

/// Writes the generated data in JSONL form next to its config.
inline void save_data(const std::filesystem::path& dir, const DataBundle& d) {
  std::filesystem::create_directories(dir);
  write_json_file(dir / "data_config.json", Json(d.config));
  for (const auto& c : d.corpora)
    write_corpus(dir / ("corpus_" + d.vocab().language(c.lang_id).name + ".jsonl"), c, d.vocab());
  for (const auto& [lang, e] : d.evals) {
    const std::string pivot = d.vocab().language(d.pivot()).name;
    const std::string other = d.vocab().language(lang).name;
    const std::string fwd = pivot + "2" + other, bwd = other + "2" + pivot;
    write_parallel(dir / ("val_" + fwd + ".jsonl"), e.val_forward, fwd);
    write_parallel(dir / ("val_" + bwd + ".jsonl"), e.val_backward, bwd);
    write_parallel(dir / ("test_" + fwd + ".jsonl"), e.test_forward, fwd);
    write_parallel(dir / ("test_" + bwd + ".jsonl"), e.test_backward, bwd);
  }
  write_images(dir / "images_train.jsonl", d.images_train);
  write_images(dir / "images_heldout.jsonl", d.images_heldout);
  write_token_counts(dir / "token_counts.jsonl", d.masks.all_counts());
}

/// Regenerates the bundle from dir/data_config.json. Image files in the
/// directory replace the generated images, which lets externally computed
/// feature vectors be used.
inline DataBundle load_data(const std::filesystem::path& dir) {
  DataBundle d = make_data(read_json_file(dir / "data_config.json").get<DataConfig>());
  if (std::filesystem::exists(dir / "images_train.jsonl")) d.images_train = read_images(dir / "images_train.jsonl");
  if (std::filesystem::exists(dir / "images_heldout.jsonl")) d.images_heldout = read_images(dir / "images_heldout.jsonl");
  return d;
}

// ===========================================================================
// Stage lists

enum class Arm { kBaseline, kI2I, kT2I };
enum class StageKind { kDenoisePretrain, kGrounding, kEc, kBacktranslation };

inline std::string to_string(Arm a) {
  switch (a) {
    case Arm::kBaseline: return "baseline";
    case Arm::kI2I: return "i2i";
    case Arm::kT2I: return "t2i";
  }
  return "baseline";
}
inline Arm arm_from_string(const std::string& s) {
  if (s == "baseline") return Arm::kBaseline;
  if (s == "i2i") return Arm::kI2I;
  if (s == "t2i") return Arm::kT2I;
  throw std::invalid_argument("unknown arm: " + s);
}
inline std::string to_string(StageKind k) {
  switch (k) {
    case StageKind::kDenoisePretrain: return "denoise_pretrain";
    case StageKind::kGrounding: return "grounding";
    case StageKind::kEc: return "ec";
    case StageKind::kBacktranslation: return "backtranslation";
  }
  return "backtranslation";
}
inline StageKind stage_kind_from_string(const std::string& s) {
  if (s == "denoise_pretrain") return StageKind::kDenoisePretrain;
  if (s == "grounding") return StageKind::kGrounding;
  if (s == "ec") return StageKind::kEc;
  if (s == "backtranslation") return StageKind::kBacktranslation;
  throw std::invalid_argument("unknown stage kind: " + s);
}

struct StageSpec {
  StageKind kind = StageKind::kBacktranslation;
  int steps = 0;
  double lr = 1e-4;
  double clip_norm = 1.0;
  int eval_every = 0;
  BtSchedule bt;    // backtranslation stages
  GameConfig game;  // grounding and EC stages

  void validate() const {
    if (steps < 0) throw std::invalid_argument("stage steps must be >= 0");
    if (!(lr > 0.0)) throw std::invalid_argument("stage lr must be positive");
    if (kind == StageKind::kBacktranslation) bt.validate();
    if (kind == StageKind::kGrounding || kind == StageKind::kEc) game.validate();
  }
};

struct PipelineOptions {
  double scale = 1.0;
  /// Multiplies every stage's learning rate.
  double lr_scale = 1.0;
  /// Per-direction BT steps between validation checkpoints (not scaled).
  int eval_every = 256;
};

struct PipelineSpec {
  Arm arm = Arm::kBaseline;
  std::vector<StageSpec> stages;
  std::string language;  // the non-pivot language of the evaluated pair
  std::uint64_t seed = 0;
  PipelineOptions options;

  int total_bt_steps() const {
    int n = 0;
    for (const auto& s : stages)
      if (s.kind == StageKind::kBacktranslation) n += s.steps;
    return n;
  }
};

namespace detail {
inline int scaled(int steps, double scale) { return static_cast<int>(std::lround(steps * scale)); }

inline StageSpec bt_stage(int steps, int switch_step, int warmup, double lr, double p_initial, int eval_every) {
  StageSpec s;
  s.kind = StageKind::kBacktranslation;
  s.steps = steps;
  s.lr = lr;
  s.clip_norm = 0.5;
  s.eval_every = eval_every;
  s.bt.steps_per_direction = steps;
  s.bt.switch_step = std::min(switch_step, steps);
  s.bt.warmup_steps = std::min(warmup, steps);
  s.bt.peak_lr = lr;
  s.bt.clip_norm = 0.5;
  s.bt.batch_size = 32;
  s.bt.mask_p_initial = p_initial;
  s.bt.mask_p_after = 0.99;
  s.bt.gen = GenerationConfig::backtranslation();
  s.bt.gen.mask_p = p_initial;
  s.bt.eval_every = eval_every;
  return s;
}

inline StageSpec game_stage(StageKind kind, int steps, double lr, double clip, GameConfig game) {
  StageSpec s;
  s.kind = kind;
  s.steps = steps;
  s.lr = lr;
  s.clip_norm = clip;
  s.game = std::move(game);
  return s;
}
}  // namespace detail

/// Stage lists of the three arms at the given scale. Total BT steps are
/// scaled once and then split so every arm gets exactly the same total.
inline PipelineSpec build_pipeline(Arm arm, const PipelineOptions& opt = {}) {
  if (!(opt.scale > 0.0)) throw std::invalid_argument("scale must be positive");
  if (!(opt.lr_scale > 0.0)) throw std::invalid_argument("lr_scale must be positive");
  const double s = opt.scale;
  const double k = opt.lr_scale;
  const int bt_total = detail::scaled(8192, s);
  const int bt_first = detail::scaled(2048, s);
  const int game_steps = detail::scaled(2048, s);
  const int sw = detail::scaled(2048, s);
  const int warm = detail::scaled(1024, s);
  PipelineSpec p;
  p.arm = arm;
  p.options = opt;
  switch (arm) {
    case Arm::kBaseline:
      p.stages = {detail::bt_stage(bt_total, sw, warm, 2e-5 * k, 0.9, opt.eval_every)};
      break;
    case Arm::kI2I: {
      GameConfig ground = GameConfig::i2i_grounding();
      GameConfig ec = GameConfig::i2i_ec();
      p.stages = {detail::bt_stage(bt_first, sw, warm, 2e-5 * k, 0.9, opt.eval_every),
                  detail::game_stage(StageKind::kGrounding, game_steps, 4e-5 * k, 1.0, ground),
                  detail::game_stage(StageKind::kEc, game_steps, 6e-6 * k, 1.0, ec),
                  detail::bt_stage(bt_total - bt_first, sw, warm, 2e-5 * k, 0.9, opt.eval_every)};
      break;
    }
    case Arm::kT2I: {
      GameConfig ground = GameConfig::t2i_grounding();
      GameConfig ec = GameConfig::t2i_ec();
      p.stages = {detail::game_stage(StageKind::kGrounding, game_steps, 4e-5 * k, 0.5, ground),
                  detail::game_stage(StageKind::kEc, game_steps, 1e-6 * k, 0.5, ec),
                  detail::bt_stage(bt_total, sw, warm, 1e-5 * k, 0.96, opt.eval_every)};
      break;
    }
  }
  return p;
}

/// Learning rate of a stage at a 0-based step: BT stages warm up linearly
/// then decay linearly; grounding and EC stages decay linearly from the peak.
inline double stage_lr(const StageSpec& stage, int step) {
  if (stage.kind == StageKind::kBacktranslation) return stage.bt.lr_schedule().at(step);
  return LrSchedule{ScheduleShape::kLinearDecay, stage.lr, 0, stage.steps}.at(step);
}

inline void to_json(Json& j, const StageSpec& s) {
  j = Json{{"kind", to_string(s.kind)}, {"steps", s.steps}, {"lr", s.lr}, {"clip_norm", s.clip_norm},
           {"eval_every", s.eval_every}};
  if (s.kind == StageKind::kBacktranslation) j["bt"] = s.bt;
  if (s.kind == StageKind::kGrounding || s.kind == StageKind::kEc) j["game"] = s.game;
}
inline void from_json(const Json& j, StageSpec& s) {
  s.kind = stage_kind_from_string(j.at("kind").get<std::string>());
  detail::read_opt(j, "steps", s.steps);
  detail::read_opt(j, "lr", s.lr);
  detail::read_opt(j, "clip_norm", s.clip_norm);
  detail::read_opt(j, "eval_every", s.eval_every);
  if (j.contains("bt")) from_json(j.at("bt"), s.bt);
  if (j.contains("game")) from_json(j.at("game"), s.game);
}
inline void to_json(Json& j, const PipelineOptions& o) {
  j = Json{{"scale", o.scale}, {"lr_scale", o.lr_scale}, {"eval_every", o.eval_every}};
}
inline void from_json(const Json& j, PipelineOptions& o) {
  detail::read_opt(j, "scale", o.scale);
  detail::read_opt(j, "lr_scale", o.lr_scale);
  detail::read_opt(j, "eval_every", o.eval_every);
}
inline void to_json(Json& j, const PipelineSpec& p) {
  j = Json{{"arm", to_string(p.arm)}, {"stages", p.stages}, {"language", p.language}, {"seed", p.seed},
           {"options", p.options}};
}
inline void from_json(const Json& j, PipelineSpec& p) {
  p.arm = arm_from_string(j.at("arm").get<std::string>());
  p.stages = j.at("stages").get<std::vector<StageSpec>>();
  p.language = j.at("language").get<std::string>();
  p.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("options")) from_json(j.at("options"), p.options);
}

/// Applies per-kind overrides ({"backtranslation": {...}, "grounding": {...},
/// "ec": {...}}) to every stage of that kind.
inline void apply_stage_overrides(PipelineSpec& p, const Json& overrides) {
  for (auto& st : p.stages) {
    const std::string key = to_string(st.kind);
    if (!overrides.contains(key)) continue;
    const Json& o = overrides.at(key);
    detail::read_opt(o, "clip_norm", st.clip_norm);
    if (st.kind == StageKind::kBacktranslation) {
      from_json(o, st.bt);
      st.bt.steps_per_direction = st.steps;
      st.bt.switch_step = std::min(st.bt.switch_step, st.steps);
      st.bt.warmup_steps = std::min(st.bt.warmup_steps, st.steps);
      st.clip_norm = st.bt.clip_norm;
      st.eval_every = st.bt.eval_every;
      if (o.contains("peak_lr")) st.lr = st.bt.peak_lr;
    } else {
      from_json(o, st.game);
      if (o.contains("lr")) st.lr = o.at("lr").get<double>();
    }
  }
}

/// Seed from ECFT_SEED when set, else the fallback.
inline std::uint64_t resolve_seed(std::uint64_t fallback) {
  if (const char* env = std::getenv("ECFT_SEED"); env != nullptr && *env != '\0') {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw std::invalid_argument(std::string("ECFT_SEED is not an unsigned integer: ") + env);
    }
  }
  return fallback;
}

// ===========================================================================
// Pretrained workspace

/// Desk-scale model size.
inline ModelConfig desk_model_config() {
  ModelConfig c;
  c.d_model = 64;
  c.heads = 4;
  c.ff_dim = 128;
  c.enc_layers = 2;
  c.dec_layers = 2;
  return c;
}

template <typename T>
struct Workspace {
  DataBundle data;
  Seq2Seq<T> base;
  ReferenceLM<T> reference;
};

/// Denoising pretraining over every language of the bundle, then the causal
/// reference LM derived from the pretrained model.
template <typename T>
Workspace<T> pretrain_workspace(DataBundle data, ModelConfig model_cfg, const PretrainConfig& pre,
                                const ReferenceLmConfig& ref_cfg, const StepCallback<T>& on_step = nullptr) {
  Seq2Seq<T> model(model_cfg, data.vocab());
  denoising_pretrain(model, data.corpora, pre, on_step);
  ReferenceLM<T> ref = make_reference_lm(model, data.corpora, ref_cfg);
  return Workspace<T>{std::move(data), std::move(model), std::move(ref)};
}

template <typename T>
void save_workspace_models(const std::filesystem::path& dir, const Workspace<T>& ws) {
  std::filesystem::create_directories(dir);
  write_json_file(dir / "model.json", Json(ws.base.config()));
  const std::uint64_t h = ws.base.config().hash();
  save_checkpoint(dir / "base.ckpt", ws.base.params(), CheckpointHeader{h, 0, "pretrained"});
  save_checkpoint(dir / "reference_lm.ckpt", ws.reference.model().params(), CheckpointHeader{h, 0, "reference_lm"});
}

template <typename T>
Workspace<T> load_workspace(const std::filesystem::path& data_dir, const std::filesystem::path& pretrained_dir) {
  DataBundle data = load_data(data_dir);
  const ModelConfig mc = read_json_file(pretrained_dir / "model.json").get<ModelConfig>();
  Seq2Seq<T> base(mc, data.vocab());
  auto check = [&](const CheckpointHeader& h, const std::filesystem::path& p) {
    if (h.config_hash != mc.hash()) throw std::runtime_error(p.string() + ": model config mismatch");
  };
  check(load_checkpoint(pretrained_dir / "base.ckpt", base.params()), pretrained_dir / "base.ckpt");
  Seq2Seq<T> lm(mc, data.vocab());
  check(load_checkpoint(pretrained_dir / "reference_lm.ckpt", lm.params()), pretrained_dir / "reference_lm.ckpt");
  return Workspace<T>{std::move(data), std::move(base), ReferenceLM<T>(std::move(lm))};
}

/// Everything a desk run needs besides the arm: data, model, pretraining,
/// and pipeline options plus per-kind stage overrides.
struct DeskConfig {
  DataConfig data;
  ModelConfig model = desk_model_config();
  PretrainConfig pretrain;
  ReferenceLmConfig reference_lm;
  PipelineOptions pipeline;
  Json stage_overrides = Json::object();
  std::string language = "hx";
  std::uint64_t seed = 1;
};

inline void to_json(Json& j, const DeskConfig& c) {
  j = Json{{"data", c.data},           {"model", c.model},       {"pretrain", c.pretrain},
           {"reference_lm", c.reference_lm}, {"pipeline", c.pipeline}, {"stage_overrides", c.stage_overrides},
           {"language", c.language},   {"seed", c.seed}};
}
inline void from_json(const Json& j, DeskConfig& c) {
  if (j.contains("data")) from_json(j.at("data"), c.data);
  if (j.contains("model")) from_json(j.at("model"), c.model);
  if (j.contains("pretrain")) from_json(j.at("pretrain"), c.pretrain);
  if (j.contains("reference_lm")) from_json(j.at("reference_lm"), c.reference_lm);
  if (j.contains("pipeline")) from_json(j.at("pipeline"), c.pipeline);
  if (j.contains("stage_overrides")) c.stage_overrides = j.at("stage_overrides");
  detail::read_opt(j, "language", c.language);
  detail::read_opt(j, "seed", c.seed);
}

/// The spec of one arm under a desk config, with overrides applied.
inline PipelineSpec desk_pipeline(const DeskConfig& cfg, Arm arm, std::uint64_t seed) {
  PipelineSpec p = build_pipeline(arm, cfg.pipeline);
  apply_stage_overrides(p, cfg.stage_overrides);
  p.language = cfg.language;
  p.seed = seed;
  return p;
}

/// Loads data and pretrained models from `dir` when present, else generates
/// and pretrains them and saves the result there.
template <typename T>
Workspace<T> prepare_workspace(const std::filesystem::path& dir, const DeskConfig& cfg,
                               const std::function<void(const std::string&)>& progress = nullptr) {
  const auto data_dir = dir / "data";
  const auto pre_dir = dir / "pretrained";
  if (std::filesystem::exists(pre_dir / "reference_lm.ckpt") && std::filesystem::exists(data_dir / "data_config.json"))
    return load_workspace<T>(data_dir, pre_dir);
  if (progress) progress("generating data");
  DataBundle data = make_data(cfg.data);
  save_data(data_dir, data);
  if (progress) progress("denoising pretraining (" + std::to_string(cfg.pretrain.steps) + " steps)");
  Workspace<T> ws = pretrain_workspace<T>(std::move(data), cfg.model, cfg.pretrain, cfg.reference_lm);
  save_workspace_models(pre_dir, ws);
  return ws;
}

// ===========================================================================
// Running

struct CheckpointRecord {
  int stage = 0;
  int step = 0;  // per-direction BT steps within the stage
  int bt_step = 0;  // cumulative per-direction BT steps of the run
  double mask_p = 0.0;
  double val_bleu_forward = 0.0;
  double val_bleu_backward = 0.0;
  double mean_bleu = 0.0;
  std::string checkpoint;  // relative to the run directory
};

inline void to_json(Json& j, const CheckpointRecord& r) {
  j = Json{{"stage", r.stage},
           {"step", r.step},
           {"bt_step", r.bt_step},
           {"mask_p", r.mask_p},
           {"val_bleu_forward", r.val_bleu_forward},
           {"val_bleu_backward", r.val_bleu_backward},
           {"mean_bleu", r.mean_bleu},
           {"checkpoint", r.checkpoint}};
}
inline void from_json(const Json& j, CheckpointRecord& r) {
  r.stage = j.at("stage").get<int>();
  r.step = j.at("step").get<int>();
  r.bt_step = j.at("bt_step").get<int>();
  r.mask_p = j.at("mask_p").get<double>();
  r.val_bleu_forward = j.at("val_bleu_forward").get<double>();
  r.val_bleu_backward = j.at("val_bleu_backward").get<double>();
  r.mean_bleu = j.at("mean_bleu").get<double>();
  r.checkpoint = j.at("checkpoint").get<std::string>();
}

/// Index of the record with the highest mean BLEU; ties go to the later one.
inline std::size_t select_best(const std::vector<CheckpointRecord>& records) {
  if (records.empty()) throw std::invalid_argument("select_best: no checkpoint records");
  std::size_t best = 0;
  for (std::size_t i = 1; i < records.size(); ++i)
    if (records[i].mean_bleu >= records[best].mean_bleu) best = i;
  return best;
}

struct RunResult {
  std::vector<CheckpointRecord> records;
  std::optional<CheckpointRecord> best;
  double test_bleu_forward = 0.0;
  double test_bleu_backward = 0.0;
  double test_mean_bleu = 0.0;
};

struct RunOptions {
  /// Stop after this many stages (the run stays resumable); -1 runs all.
  int stop_after_stages = -1;
  /// Progress lines (wall-clock free) for humans; not part of metrics.jsonl.
  std::function<void(const std::string&)> progress;
  /// Extra fields merged into run.json (e.g. where the workspace lives).
  Json run_info = Json::object();
};

namespace detail {
inline std::string stage_dir(int k) { return "stage_" + std::to_string(k); }

inline void append_line(const std::filesystem::path& path, const Json& j) {
  std::ofstream os(path, std::ios::app);
  if (!os) throw std::runtime_error("cannot append to " + path.string());
  os << j.dump() << "\n";
}

inline std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::vector<std::string> out;
  std::ifstream is(path);
  std::string line;
  while (std::getline(is, line))
    if (!line.empty()) out.push_back(line);
  return out;
}
}  // namespace detail

template <typename T>
class PipelineRunner {
 public:
  PipelineRunner(const Workspace<T>& ws, PipelineSpec spec, std::filesystem::path run_dir)
      : ws_(ws), spec_(std::move(spec)), dir_(std::move(run_dir)), data_(ws.data), model_(ws.base) {
    lang_ = data_.find_language(spec_.language);
    for (const auto& s : spec_.stages) s.validate();
  }

  /// Fresh run: clears metrics and starts from the pretrained model.
  RunResult run(const RunOptions& opt = {}) {
    std::filesystem::create_directories(dir_);
    Json run = spec_;
    run["pivot"] = data_.vocab().language(data_.pivot()).name;
    run.update(opt.run_info);
    write_json_file(dir_ / "run.json", run);
    write_text_atomic(dir_ / "metrics.jsonl", "");
    model_ = ws_.base;
    return execute(0, {}, opt);
  }

  /// Continues from the last completed stage recorded in dir/state.json.
  RunResult resume(const RunOptions& opt = {}) {
    const Json state = read_json_file(dir_ / "state.json");
    const int done = state.at("completed_stages").get<int>();
    const auto lines = state.at("metrics_lines").get<std::size_t>();
    auto all = detail::read_lines(dir_ / "metrics.jsonl");
    if (all.size() < lines) throw std::runtime_error("resume: metrics log shorter than recorded state");
    all.resize(lines);
    std::string text;
    std::vector<CheckpointRecord> records;
    for (const auto& l : all) {
      text += l + "\n";
      const Json j = Json::parse(l);
      if (j.at("event") == "eval") records.push_back(j.at("record").get<CheckpointRecord>());
    }
    write_text_atomic(dir_ / "metrics.jsonl", text);
    model_ = ws_.base;
    if (done > 0) load_checkpoint(dir_ / detail::stage_dir(done - 1) / "final.ckpt", model_.params());
    return execute(done, std::move(records), opt);
  }

  const Seq2Seq<T>& model() const { return model_; }

 private:
  RunResult execute(int first_stage, std::vector<CheckpointRecord> records, const RunOptions& opt) {
    int bt_done = 0;
    for (int k = 0; k < first_stage; ++k)
      if (spec_.stages[static_cast<std::size_t>(k)].kind == StageKind::kBacktranslation)
        bt_done += spec_.stages[static_cast<std::size_t>(k)].steps;
    const int n = static_cast<int>(spec_.stages.size());
    const int last = opt.stop_after_stages < 0 ? n : std::min(n, first_stage + opt.stop_after_stages);
    for (int k = first_stage; k < last; ++k) {
      const StageSpec& st = spec_.stages[static_cast<std::size_t>(k)];
      std::filesystem::create_directories(dir_ / detail::stage_dir(k));
      std::mt19937_64 rng(detail::mix_seed(spec_.seed, 0x57A6E + static_cast<std::uint64_t>(k)));
      if (opt.progress) opt.progress("stage " + std::to_string(k) + " " + to_string(st.kind) + " (" + std::to_string(st.steps) + " steps)");
      switch (st.kind) {
        case StageKind::kBacktranslation: run_bt(k, st, bt_done, rng, records, opt); break;
        case StageKind::kGrounding:
        case StageKind::kEc: run_game(k, st, rng); break;
        case StageKind::kDenoisePretrain: run_denoise(k, st, rng); break;
      }
      if (st.kind == StageKind::kBacktranslation) bt_done += st.steps;
      save_checkpoint(dir_ / detail::stage_dir(k) / "final.ckpt", model_.params(),
                      CheckpointHeader{model_.config().hash(), static_cast<std::uint64_t>(k), "stage_end"});
      log(Json{{"event", "stage_end"}, {"stage", k}, {"kind", to_string(st.kind)}, {"checksum", model_.params().checksum()}});
      write_json_file(dir_ / "state.json",
                      Json{{"completed_stages", k + 1}, {"metrics_lines", detail::read_lines(dir_ / "metrics.jsonl").size()}});
    }
    RunResult res;
    res.records = records;
    if (last < n || records.empty()) return res;
    const CheckpointRecord& best = records[select_best(records)];
    res.best = best;
    Seq2Seq<T> chosen = ws_.base;
    load_checkpoint(dir_ / best.checkpoint, chosen.params());
    GenerationConfig gen = spec_.stages.back().bt.gen;
    gen.mask_p = best.mask_p;
    const PairEvalSets& e = data_.evals.at(lang_);
    res.test_bleu_forward = evaluate_translation(chosen, e.test_forward, data_.pivot(), lang_, data_.masks, gen).bleu;
    res.test_bleu_backward = evaluate_translation(chosen, e.test_backward, lang_, data_.pivot(), data_.masks, gen).bleu;
    res.test_mean_bleu = 0.5 * (res.test_bleu_forward + res.test_bleu_backward);
    write_json_file(dir_ / "best.json", Json{{"arm", to_string(spec_.arm)},
                                             {"language", spec_.language},
                                             {"pivot", data_.vocab().language(data_.pivot()).name},
                                             {"seed", spec_.seed},
                                             {"record", best},
                                             {"test_bleu_forward", res.test_bleu_forward},
                                             {"test_bleu_backward", res.test_bleu_backward},
                                             {"test_mean_bleu", res.test_mean_bleu}});
    return res;
  }

  void log(const Json& j) { detail::append_line(dir_ / "metrics.jsonl", j); }

  void run_bt(int k, const StageSpec& st, int bt_before, std::mt19937_64& rng, std::vector<CheckpointRecord>& records,
              const RunOptions& opt) {
    BtSchedule sched = st.bt;
    sched.steps_per_direction = st.steps;
    sched.eval_every = st.eval_every;
    const LangId pivot = data_.pivot();
    const MonolingualCorpus& ca = data_.corpora[static_cast<std::size_t>(pivot)];
    const MonolingualCorpus& cb = data_.corpora[static_cast<std::size_t>(lang_)];
    const PairEvalSets& e = data_.evals.at(lang_);
    auto on_step = [&](const BtEvent& ev) {
      log(Json{{"event", "bt_step"},
               {"stage", k},
               {"step", ev.step},
               {"direction", ev.direction == Direction::kAtoB ? "forward" : "backward"},
               {"loss", ev.result.loss},
               {"lr", ev.result.lr},
               {"mask_p", ev.result.mask_p},
               {"grad_norm", ev.result.grad_norm}});
    };
    auto on_eval = [&](int step) {
      CheckpointRecord r;
      r.stage = k;
      r.step = step;
      r.bt_step = bt_before + step;
      r.mask_p = sched.mask_p_at(step - 1);
      GenerationConfig gen = sched.gen;
      gen.mask_p = r.mask_p;
      r.val_bleu_forward = evaluate_translation(model_, e.val_forward, pivot, lang_, data_.masks, gen).bleu;
      r.val_bleu_backward = evaluate_translation(model_, e.val_backward, lang_, pivot, data_.masks, gen).bleu;
      r.mean_bleu = 0.5 * (r.val_bleu_forward + r.val_bleu_backward);
      r.checkpoint = detail::stage_dir(k) + "/step_" + std::to_string(step) + ".ckpt";
      save_checkpoint(dir_ / r.checkpoint, model_.params(),
                      CheckpointHeader{model_.config().hash(), static_cast<std::uint64_t>(r.bt_step), "bt_eval"});
      log(Json{{"event", "eval"}, {"stage", k}, {"step", step}, {"record", r}});
      if (opt.progress)
        opt.progress("  eval step " + std::to_string(step) + ": forward " + std::to_string(r.val_bleu_forward) +
                     " backward " + std::to_string(r.val_bleu_backward));
      records.push_back(r);
    };
    bt_round(model_, ca, cb, data_.masks, sched, rng, on_step, on_eval);
  }

  void run_game(int k, const StageSpec& st, std::mt19937_64& rng) {
    const LangId pivot = data_.pivot();
    const bool grounding = st.kind == StageKind::kGrounding;
    const std::vector<LangId> langs = grounding ? std::vector<LangId>{pivot} : std::vector<LangId>{pivot, lang_};
    Adam<T> opt;
    const GameConfig& gc = st.game;
    const int C = std::min<int>(gc.num_candidates, static_cast<int>(data_.images_train.size()));
    for (int step = 0; step < st.steps; ++step) {
      const double lr = stage_lr(st, step);
      EcBatch<T> batch = make_ec_batch<T>(data_.images_train, gc.batch_size, C, gc.variant, langs, pivot, rng);
      GameLosses L = grounding ? grounding_step(model_, opt, batch, gc, lr, st.clip_norm)
                               : ec_step(model_, opt, batch, &ws_.reference, data_.masks, gc, lr, st.clip_norm, rng);
      log(Json{{"event", grounding ? "grounding_step" : "ec_step"},
               {"stage", k},
               {"step", step + 1},
               {"selection_ce", L.selection_ce},
               {"kl_reg", L.kl_reg},
               {"caption_ce", L.caption_ce},
               {"total", L.total},
               {"receiver_accuracy", L.receiver_accuracy},
               {"message_length_mean", L.message_length_mean},
               {"caption_equality_rate", L.caption_equality_rate},
               {"lr", lr},
               {"grad_norm", L.grad_norm}});
    }
  }

  void run_denoise(int k, const StageSpec& st, std::mt19937_64& rng) {
    PretrainConfig pc;
    pc.steps = st.steps;
    pc.lr = st.lr;
    pc.clip_norm = st.clip_norm;
    pc.warmup_steps = 0;
    pc.seed = rng();
    denoising_pretrain(model_, data_.corpora, pc, [&](int step, double loss) {
      log(Json{{"event", "denoise_step"}, {"stage", k}, {"step", step + 1}, {"loss", loss}});
    });
  }

  const Workspace<T>& ws_;
  PipelineSpec spec_;
  std::filesystem::path dir_;
  DataBundle data_;
  Seq2Seq<T> model_;
  LangId lang_ = 0;
};

/// Runs a spec into out_dir/<arm>/<seed>.
template <typename T>
RunResult run_pipeline(const Workspace<T>& ws, const PipelineSpec& spec, const std::filesystem::path& out_dir,
                       const RunOptions& opt = {}) {
  PipelineRunner<T> r(ws, spec, out_dir / to_string(spec.arm) / std::to_string(spec.seed));
  return r.run(opt);
}

template <typename T>
RunResult resume_pipeline(const Workspace<T>& ws, const std::filesystem::path& run_dir, const RunOptions& opt = {}) {
  PipelineRunner<T> r(ws, read_json_file(run_dir / "run.json").get<PipelineSpec>(), run_dir);
  return r.resume(opt);
}

}  // namespace ecft

#endif  // ECFT_PIPELINE_HPP
