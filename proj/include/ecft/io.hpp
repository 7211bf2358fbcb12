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

// JSON forms of configurations and JSONL forms of datasets.

#ifndef ECFT_IO_HPP
#define ECFT_IO_HPP

#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ecft/backtranslation.hpp"
#include "ecft/ec_games.hpp"
#include "ecft/generation.hpp"
#include "ecft/model.hpp"
#include "ecft/pretrain.hpp"
#include "ecft/synth_world.hpp"

namespace ecft {

using Json = nlohmann::json;

// ---- configuration objects ------------------------------------------------
// Readers accept partial objects: absent keys keep their defaults.

namespace detail {
template <typename V>
void read_opt(const Json& j, const char* key, V& out) {
  if (j.contains(key)) out = j.at(key).get<V>();
}
}  // namespace detail

inline void to_json(Json& j, const ModelConfig& c) {
  j = Json{{"d_model", c.d_model},         {"heads", c.heads},           {"ff_dim", c.ff_dim},
           {"enc_layers", c.enc_layers},   {"dec_layers", c.dec_layers}, {"feature_dim", c.feature_dim},
           {"adapter_len", c.adapter_len}, {"max_positions", c.max_positions}, {"init_seed", c.init_seed}};
}
inline void from_json(const Json& j, ModelConfig& c) {
  detail::read_opt(j, "d_model", c.d_model);
  detail::read_opt(j, "heads", c.heads);
  detail::read_opt(j, "ff_dim", c.ff_dim);
  detail::read_opt(j, "enc_layers", c.enc_layers);
  detail::read_opt(j, "dec_layers", c.dec_layers);
  detail::read_opt(j, "feature_dim", c.feature_dim);
  detail::read_opt(j, "adapter_len", c.adapter_len);
  detail::read_opt(j, "max_positions", c.max_positions);
  detail::read_opt(j, "init_seed", c.init_seed);
}

inline void to_json(Json& j, const GenerationConfig& c) {
  j = Json{{"max_len", c.max_len},
           {"num_beams", c.num_beams},
           {"repetition_penalty", c.repetition_penalty},
           {"no_repeat_ngram", c.no_repeat_ngram},
           {"tau", c.temperature_tau},
           {"mask_p", c.mask_p},
           {"use_mask", c.use_mask},
           {"length_penalty", c.length_penalty}};
}
inline void from_json(const Json& j, GenerationConfig& c) {
  detail::read_opt(j, "max_len", c.max_len);
  detail::read_opt(j, "num_beams", c.num_beams);
  detail::read_opt(j, "repetition_penalty", c.repetition_penalty);
  detail::read_opt(j, "no_repeat_ngram", c.no_repeat_ngram);
  detail::read_opt(j, "tau", c.temperature_tau);
  detail::read_opt(j, "mask_p", c.mask_p);
  detail::read_opt(j, "use_mask", c.use_mask);
  detail::read_opt(j, "length_penalty", c.length_penalty);
}

inline void to_json(Json& j, const GameConfig& c) {
  j = Json{{"variant", to_string(c.variant)},
           {"num_candidates", c.num_candidates},
           {"batch_size", c.batch_size},
           {"lambda_selection", c.lambda_selection},
           {"lambda_kl", c.lambda_kl},
           {"mask_p", c.mask_p},
           {"tau", c.tau},
           {"score_fn", to_string(c.score_fn)},
           {"kl_direction", to_string(c.kl_direction)},
           {"aggregator", to_string(c.aggregator)},
           {"generation", c.gen}};
}
inline void from_json(const Json& j, GameConfig& c) {
  if (j.contains("variant")) c.variant = game_variant_from_string(j.at("variant").get<std::string>());
  detail::read_opt(j, "num_candidates", c.num_candidates);
  detail::read_opt(j, "batch_size", c.batch_size);
  detail::read_opt(j, "lambda_selection", c.lambda_selection);
  detail::read_opt(j, "lambda_kl", c.lambda_kl);
  detail::read_opt(j, "mask_p", c.mask_p);
  detail::read_opt(j, "tau", c.tau);
  if (j.contains("score_fn")) c.score_fn = score_fn_from_string(j.at("score_fn").get<std::string>());
  if (j.contains("kl_direction")) c.kl_direction = kl_direction_from_string(j.at("kl_direction").get<std::string>());
  if (j.contains("aggregator")) c.aggregator = aggregator_from_string(j.at("aggregator").get<std::string>());
  if (j.contains("generation")) from_json(j.at("generation"), c.gen);
}

inline void to_json(Json& j, const BtSchedule& s) {
  j = Json{{"steps_per_direction", s.steps_per_direction},
           {"mask_p_initial", s.mask_p_initial},
           {"mask_p_after", s.mask_p_after},
           {"switch_step", s.switch_step},
           {"peak_lr", s.peak_lr},
           {"warmup_steps", s.warmup_steps},
           {"clip_norm", s.clip_norm},
           {"batch_size", s.batch_size},
           {"num_beams", s.gen.num_beams},
           {"max_len", s.gen.max_len},
           {"eval_every", s.eval_every}};
}
inline void from_json(const Json& j, BtSchedule& s) {
  detail::read_opt(j, "steps_per_direction", s.steps_per_direction);
  detail::read_opt(j, "mask_p_initial", s.mask_p_initial);
  detail::read_opt(j, "mask_p_after", s.mask_p_after);
  detail::read_opt(j, "switch_step", s.switch_step);
  detail::read_opt(j, "peak_lr", s.peak_lr);
  detail::read_opt(j, "warmup_steps", s.warmup_steps);
  detail::read_opt(j, "clip_norm", s.clip_norm);
  detail::read_opt(j, "batch_size", s.batch_size);
  detail::read_opt(j, "num_beams", s.gen.num_beams);
  detail::read_opt(j, "max_len", s.gen.max_len);
  detail::read_opt(j, "eval_every", s.eval_every);
}

inline void to_json(Json& j, const NoiseConfig& c) {
  j = Json{{"mask_ratio", c.mask_ratio}, {"mean_span", c.mean_span}, {"deletion_prob", c.deletion_prob}};
}
inline void from_json(const Json& j, NoiseConfig& c) {
  detail::read_opt(j, "mask_ratio", c.mask_ratio);
  detail::read_opt(j, "mean_span", c.mean_span);
  detail::read_opt(j, "deletion_prob", c.deletion_prob);
}

inline void to_json(Json& j, const PretrainConfig& c) {
  j = Json{{"steps", c.steps},
           {"batch_size", c.batch_size},
           {"lr", c.lr},
           {"warmup_steps", c.warmup_steps},
           {"clip_norm", c.clip_norm},
           {"noise", c.noise},
           {"low_tier_weight", c.low_tier_weight},
           {"seed", c.seed}};
}
inline void from_json(const Json& j, PretrainConfig& c) {
  detail::read_opt(j, "steps", c.steps);
  detail::read_opt(j, "batch_size", c.batch_size);
  detail::read_opt(j, "lr", c.lr);
  detail::read_opt(j, "warmup_steps", c.warmup_steps);
  detail::read_opt(j, "clip_norm", c.clip_norm);
  if (j.contains("noise")) from_json(j.at("noise"), c.noise);
  detail::read_opt(j, "low_tier_weight", c.low_tier_weight);
  detail::read_opt(j, "seed", c.seed);
}

inline void to_json(Json& j, const ReferenceLmConfig& c) {
  j = Json{{"steps", c.steps}, {"batch_size", c.batch_size}, {"lr", c.lr}, {"clip_norm", c.clip_norm}, {"seed", c.seed}};
}
inline void from_json(const Json& j, ReferenceLmConfig& c) {
  detail::read_opt(j, "steps", c.steps);
  detail::read_opt(j, "batch_size", c.batch_size);
  detail::read_opt(j, "lr", c.lr);
  detail::read_opt(j, "clip_norm", c.clip_norm);
  detail::read_opt(j, "seed", c.seed);
}

inline void to_json(Json& j, const SamplerConfig& c) {
  j = Json{{"zipf_exponent", c.zipf_exponent},
           {"min_len", c.min_len},
           {"max_len", c.max_len},
           {"markov_strength", c.markov_strength},
           {"num_successors", c.num_successors}};
}
inline void from_json(const Json& j, SamplerConfig& c) {
  detail::read_opt(j, "zipf_exponent", c.zipf_exponent);
  detail::read_opt(j, "min_len", c.min_len);
  detail::read_opt(j, "max_len", c.max_len);
  detail::read_opt(j, "markov_strength", c.markov_strength);
  detail::read_opt(j, "num_successors", c.num_successors);
}

inline void to_json(Json& j, const FamilyMember& m) {
  j = Json{{"name", m.name}, {"tier", to_string(m.tier)}, {"reorder", m.reorder.name()}};
}
inline void from_json(const Json& j, FamilyMember& m) {
  m.name = j.at("name").get<std::string>();
  if (j.contains("tier")) m.tier = tier_from_string(j.at("tier").get<std::string>());
  if (j.contains("reorder")) m.reorder = ReorderRule::parse(j.at("reorder").get<std::string>());
}

inline void to_json(Json& j, const AttributeAxis& a) { j = Json{{"name", a.name}, {"cardinality", a.cardinality}}; }
inline void from_json(const Json& j, AttributeAxis& a) {
  a.name = j.at("name").get<std::string>();
  a.cardinality = j.at("cardinality").get<int>();
}

// ---- files ----------------------------------------------------------------

inline Json read_json_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  try {
    return Json::parse(is);
  } catch (const Json::parse_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

/// Writes through a temporary file renamed into place.
inline void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + tmp.string());
    os << text;
    if (!os) throw std::runtime_error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline void write_json_file(const std::filesystem::path& path, const Json& j) { write_text_atomic(path, j.dump(2) + "\n"); }

inline std::vector<Json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::vector<Json> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(Json::parse(line));
    } catch (const Json::parse_error& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline void write_jsonl(const std::filesystem::path& path, const std::vector<Json>& rows) {
  std::string text;
  for (const auto& r : rows) text += r.dump() + "\n";
  write_text_atomic(path, text);
}

// ---- datasets -------------------------------------------------------------

/// One `{"lang": name, "tokens": [...]}` record per sentence.
inline void write_corpus(const std::filesystem::path& path, const MonolingualCorpus& c, const Vocabulary& vocab) {
  const std::string name = vocab.language(c.lang_id).name;
  std::vector<Json> rows;
  rows.reserve(c.sentences.size());
  for (const auto& s : c.sentences) rows.push_back(Json{{"lang", name}, {"tokens", s}});
  write_jsonl(path, rows);
}

inline MonolingualCorpus read_corpus(const std::filesystem::path& path, const Vocabulary& vocab) {
  MonolingualCorpus c;
  bool first = true;
  for (const auto& r : read_jsonl(path)) {
    const LangId lang = vocab.find(r.at("lang").get<std::string>());
    if (first) {
      c.lang_id = lang;
      c.resource_tier = vocab.language(lang).tier;
      first = false;
    } else if (lang != c.lang_id) {
      throw std::runtime_error(path.string() + ": mixed languages in one corpus");
    }
    c.sentences.push_back(r.at("tokens").get<Sentence>());
  }
  if (first) throw std::runtime_error(path.string() + ": empty corpus");
  return c;
}

/// One `{"src_tokens", "ref_tokens", "direction": "src->tgt"}` record per pair.
inline void write_parallel(const std::filesystem::path& path, const std::vector<ParallelExample>& set,
                           const std::string& direction) {
  std::vector<Json> rows;
  for (const auto& e : set) rows.push_back(Json{{"src_tokens", e.src}, {"ref_tokens", e.ref}, {"direction", direction}});
  write_jsonl(path, rows);
}

inline std::vector<ParallelExample> read_parallel(const std::filesystem::path& path) {
  std::vector<ParallelExample> out;
  for (const auto& r : read_jsonl(path))
    out.push_back({r.at("src_tokens").get<Sentence>(), r.at("ref_tokens").get<Sentence>()});
  return out;
}

inline void write_images(const std::filesystem::path& path, const std::vector<ImageRecord>& images) {
  std::vector<Json> rows;
  for (const auto& im : images)
    rows.push_back(Json{{"image_id", im.image_id},
                        {"features", im.features},
                        {"attributes", im.attributes},
                        {"caption_tokens", im.gold_caption}});
  write_jsonl(path, rows);
}

/// Reads image records; also the ingestion path for externally computed
/// feature vectors (attributes may be omitted).
inline std::vector<ImageRecord> read_images(const std::filesystem::path& path) {
  std::vector<ImageRecord> out;
  std::size_t dim = 0;
  for (const auto& r : read_jsonl(path)) {
    ImageRecord im;
    im.image_id = r.at("image_id").get<int>();
    im.features = r.at("features").get<std::vector<double>>();
    if (r.contains("attributes")) im.attributes = r.at("attributes").get<std::vector<int>>();
    im.gold_caption = r.at("caption_tokens").get<Sentence>();
    if (out.empty()) dim = im.features.size();
    if (im.features.size() != dim || dim == 0) throw std::runtime_error(path.string() + ": inconsistent feature dimension");
    out.push_back(std::move(im));
  }
  return out;
}

inline void write_token_counts(const std::filesystem::path& path, const std::map<LangId, std::map<Token, long long>>& counts) {
  std::vector<Json> rows;
  for (const auto& [lang, m] : counts) {
    Json c = Json::object();
    for (const auto& [t, n] : m) c[std::to_string(t)] = n;
    rows.push_back(Json{{"lang", lang}, {"counts", c}});
  }
  write_jsonl(path, rows);
}

inline std::map<LangId, std::map<Token, long long>> read_token_counts(const std::filesystem::path& path) {
  std::map<LangId, std::map<Token, long long>> out;
  for (const auto& r : read_jsonl(path)) {
    auto& m = out[r.at("lang").get<LangId>()];
    for (const auto& [k, v] : r.at("counts").items()) m[static_cast<Token>(std::stoi(k))] = v.get<long long>();
  }
  return out;
}

}  // namespace ecft

#endif  // ECFT_IO_HPP
