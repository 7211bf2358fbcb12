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

// A small pre-LayerNorm transformer encoder-decoder with a shared (tied)
// token embedding, plus the image adapter and receiver aggregators used by
// the reference game.
//
// Layout conventions: a batch of B sequences padded to length L is a
// (B*L) x d matrix with example b occupying rows [b*L, (b+1)*L).

#ifndef ECFT_MODEL_HPP
#define ECFT_MODEL_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "ecft/autograd.hpp"
#include "ecft/params.hpp"
#include "ecft/vocab.hpp"

namespace ecft {

struct ModelConfig {
  int d_model = 128;
  int heads = 4;
  int ff_dim = 256;
  int enc_layers = 2;
  int dec_layers = 2;
  int feature_dim = 32;
  int adapter_len = 32;
  int max_positions = 160;
  std::uint64_t init_seed = 0;

  bool operator==(const ModelConfig&) const = default;

  std::uint64_t hash() const {
    std::uint64_t h = 1469598103934665603ULL;
    for (std::uint64_t v : {std::uint64_t(d_model), std::uint64_t(heads), std::uint64_t(ff_dim),
                            std::uint64_t(enc_layers), std::uint64_t(dec_layers), std::uint64_t(feature_dim),
                            std::uint64_t(adapter_len), std::uint64_t(max_positions)})
      h = (h ^ v) * 1099511628211ULL;
    return h;
  }
};

enum class AggregatorKind { kClsToken, kRecurrent };

inline std::string to_string(AggregatorKind k) { return k == AggregatorKind::kClsToken ? "cls_token" : "recurrent"; }
inline AggregatorKind aggregator_from_string(const std::string& s) {
  if (s == "cls_token" || s == "cls") return AggregatorKind::kClsToken;
  if (s == "recurrent" || s == "rnn") return AggregatorKind::kRecurrent;
  throw std::invalid_argument("unknown aggregator: " + s);
}

/// Encoder states (or adapter output) used as cross-attention memory.
struct Memory {
  Var states;
  int batch = 0;
  int len = 0;
  std::vector<int> lengths;
  bool cls_inserted = false;
};

template <typename T>
class Seq2Seq {
 public:
  Seq2Seq() = default;

  Seq2Seq(const ModelConfig& cfg, const Vocabulary& vocab) : cfg_(cfg), vocab_(vocab) {
    if (cfg.d_model % cfg.heads != 0) throw std::invalid_argument("heads must divide d_model");
    init_params();
    build_positions();
  }

  const ModelConfig& config() const { return cfg_; }
  const Vocabulary& vocab() const { return vocab_; }
  ParamSet<T>& params() { return params_; }
  const ParamSet<T>& params() const { return params_; }
  int vocab_size() const { return vocab_.size(); }
  int d_model() const { return cfg_.d_model; }

  // ---- input construction -------------------------------------------------

  /// Token id layout for encoder inputs: [cls]? [control] tokens..., padded
  /// with -1 (zero rows). Returns ids, the padded length and true lengths.
  struct Layout {
    std::vector<int> ids;
    int len = 0;
    std::vector<int> lengths;
  };

  Layout encoder_layout(const std::vector<Sentence>& batch, const std::vector<LangId>& langs, bool insert_cls) const {
    if (batch.size() != langs.size()) throw std::invalid_argument("encode: language count mismatch");
    Layout lay;
    const int prefix = insert_cls ? 2 : 1;
    for (const auto& s : batch) lay.len = std::max(lay.len, static_cast<int>(s.size()) + prefix);
    for (std::size_t b = 0; b < batch.size(); ++b) {
      vocab_.check_sentence(batch[b]);
      if (insert_cls) lay.ids.push_back(Vocabulary::kCls);
      lay.ids.push_back(vocab_.control_token(langs[b]));
      for (Token t : batch[b]) lay.ids.push_back(t);
      const int n = static_cast<int>(batch[b].size()) + prefix;
      for (int i = n; i < lay.len; ++i) lay.ids.push_back(-1);
      lay.lengths.push_back(n);
    }
    check_positions(lay.len);
    return lay;
  }

  /// The shared embedding table bound into g.
  Var embedding(Graph<T>& g) const { return bind(g, "embed"); }

  /// Embedding rows (unscaled) for the given ids.
  Var embed(Graph<T>& g, const std::vector<int>& ids) const { return g.gather_rows(bind(g, "embed"), ids); }

  // ---- encoder ------------------------------------------------------------

  Memory encode(Graph<T>& g, const std::vector<Sentence>& batch, const std::vector<LangId>& langs,
                bool insert_cls = false) const {
    if (batch.empty()) throw std::invalid_argument("encode: empty batch");
    Layout lay = encoder_layout(batch, langs, insert_cls);
    Var rows = embed(g, lay.ids);
    Memory m = encode_embedded(g, rows, static_cast<int>(batch.size()), lay.len, lay.lengths);
    m.cls_inserted = insert_cls;
    return m;
  }

  /// Runs the encoder stack over pre-embedded (unscaled) input rows.
  Memory encode_embedded(Graph<T>& g, Var rows, int batch, int len, std::vector<int> lengths) const {
    Var x = add_positions(g, rows, batch, len);
    for (int l = 0; l < cfg_.enc_layers; ++l) {
      const std::string pre = "enc" + std::to_string(l) + ".";
      Var h = ln(g, x, pre + "ln1");
      AttentionSpec spec{batch, len, len, cfg_.heads, false, lengths};
      x = g.add(x, attention_block(g, h, h, pre + "self", spec));
      h = ln(g, x, pre + "ln2");
      x = g.add(x, ffn(g, h, pre + "ffn"));
    }
    x = ln(g, x, "enc.final_ln");
    return Memory{x, batch, len, std::move(lengths), false};
  }

  // ---- decoder ------------------------------------------------------------

  /// Decoder over pre-embedded (unscaled) input rows; returns logits
  /// (batch*len) x |V|.
  Var decode_embedded(Graph<T>& g, const Memory& mem, Var rows, int batch, int len) const {
    if (mem.batch != batch) throw std::invalid_argument("decode: memory batch mismatch");
    if (mem.len == 0) throw std::invalid_argument("decode: empty memory");
    check_positions(len);
    Var x = add_positions(g, rows, batch, len);
    for (int l = 0; l < cfg_.dec_layers; ++l) {
      const std::string pre = "dec" + std::to_string(l) + ".";
      Var h = ln(g, x, pre + "ln1");
      x = g.add(x, attention_block(g, h, h, pre + "self", AttentionSpec{batch, len, len, cfg_.heads, true, {}}));
      h = ln(g, x, pre + "ln2");
      x = g.add(x, attention_block(g, h, mem.states, pre + "cross",
                                   AttentionSpec{batch, len, mem.len, cfg_.heads, false, mem.lengths}));
      h = ln(g, x, pre + "ln3");
      x = g.add(x, ffn(g, h, pre + "ffn"));
    }
    x = ln(g, x, "dec.final_ln");
    return project(g, x);
  }

  /// Tied output projection.
  Var project(Graph<T>& g, Var hidden) const {
    return g.add_row(g.matmul_nt(hidden, bind(g, "embed")), bind(g, "out_bias"));
  }

  struct TeacherForced {
    Var logits;
    std::vector<int> targets;  // -1 on padded positions
    int len = 0;
  };

  /// Decoder inputs [control, y_1..y_n], targets [y_1..y_n, eos].
  TeacherForced decode_teacher_forced(Graph<T>& g, const Memory& mem, const std::vector<Sentence>& targets,
                                      const std::vector<LangId>& langs) const {
    if (mem.len == 0 || mem.batch == 0) throw std::invalid_argument("decode: empty memory");
    if (static_cast<int>(targets.size()) != mem.batch || langs.size() != targets.size())
      throw std::invalid_argument("decode: batch mismatch");
    TeacherForced tf;
    for (const auto& s : targets) tf.len = std::max(tf.len, static_cast<int>(s.size()) + 1);
    std::vector<int> ids;
    for (std::size_t b = 0; b < targets.size(); ++b) {
      vocab_.check_sentence(targets[b]);
      ids.push_back(vocab_.control_token(langs[b]));
      for (Token t : targets[b]) ids.push_back(t);
      for (Token t : targets[b]) tf.targets.push_back(t);
      tf.targets.push_back(Vocabulary::kEos);
      for (int i = static_cast<int>(targets[b].size()) + 1; i < tf.len; ++i) {
        ids.push_back(-1);
        tf.targets.push_back(-1);
      }
    }
    tf.logits = decode_embedded(g, mem, embed(g, ids), mem.batch, tf.len);
    return tf;
  }

  // ---- image adapter ------------------------------------------------------

  /// One-layer LSTM unrolled adapter_len steps: the (projected) feature
  /// vector is the initial hidden state and a learned constant is the input
  /// at every step. features is batch x feature_dim.
  Memory adapt_image(Graph<T>& g, Var features) const {
    const Mat<T>& f = g.value(features);
    if (f.cols() != cfg_.feature_dim) throw std::invalid_argument("adapt_image: feature dimension mismatch");
    const int batch = static_cast<int>(f.rows());
    const int K = cfg_.adapter_len;
    Var h = g.linear(features, bind(g, "adapter.init_w"), bind(g, "adapter.init_b"));
    Var c = g.constant(Mat<T>::Zero(batch, cfg_.d_model));
    // constant input contribution x W_x + b, broadcast over the batch
    Var xin = g.add(g.matmul(bind(g, "adapter.input"), bind(g, "adapter.wx")), bind(g, "adapter.b"));
    std::vector<Var> outs;
    for (int k = 0; k < K; ++k) {
      Var gates = g.add_row(g.matmul(h, bind(g, "adapter.wh")), xin);
      std::tie(h, c) = lstm_update(g, gates, c);
      outs.push_back(h);
    }
    // step-major -> example-major rows
    std::vector<int> order(static_cast<std::size_t>(batch * K));
    for (int b = 0; b < batch; ++b)
      for (int k = 0; k < K; ++k) order[static_cast<std::size_t>(b * K + k)] = k * batch + b;
    Var states = g.gather_rows(g.concat_rows(outs), order);
    return Memory{states, batch, K, std::vector<int>(static_cast<std::size_t>(batch), K), false};
  }

  // ---- receiver aggregation -----------------------------------------------

  /// Fixed-size receiver representation (batch x feature_dim).
  Var aggregate(Graph<T>& g, const Memory& hidden, AggregatorKind kind) const {
    if (kind == AggregatorKind::kClsToken) {
      if (!hidden.cls_inserted) throw std::invalid_argument("cls aggregator requires an inserted CLS token");
      std::vector<int> rows;
      for (int b = 0; b < hidden.batch; ++b) rows.push_back(b * hidden.len);
      Var cls = g.gather_rows(hidden.states, rows);
      return g.linear(cls, bind(g, "agg.cls_w"), bind(g, "agg.cls_b"));
    }
    const int batch = hidden.batch;
    Var h = g.constant(Mat<T>::Zero(batch, cfg_.d_model));
    Var c = g.constant(Mat<T>::Zero(batch, cfg_.d_model));
    for (int t = 0; t < hidden.len; ++t) {
      std::vector<int> rows;
      std::vector<char> live;
      bool any = false;
      for (int b = 0; b < batch; ++b) {
        const bool on = t < hidden.lengths[static_cast<std::size_t>(b)];
        rows.push_back(on ? b * hidden.len + t : -1);
        live.push_back(on ? 1 : 0);
        any = any || on;
      }
      if (!any) break;
      Var x = g.gather_rows(hidden.states, rows);
      Var gates = g.add_row(g.add(g.matmul(x, bind(g, "agg.rnn_wx")), g.matmul(h, bind(g, "agg.rnn_wh"))),
                            bind(g, "agg.rnn_b"));
      auto [h2, c2] = lstm_update(g, gates, c);
      h = g.select_rows(h2, h, live);
      c = g.select_rows(c2, c, live);
    }
    return g.linear(h, bind(g, "agg.rnn_out_w"), bind(g, "agg.rnn_out_b"));
  }

  // ---- raw access for the incremental decoder -----------------------------

  const Mat<T>& weight(const std::string& name) const { return params_.at(name).value; }
  const Mat<T>& positions() const { return positions_; }

  void check_positions(int len) const {
    if (len > cfg_.max_positions) throw std::invalid_argument("sequence longer than max_positions");
  }

 private:
  Parameter<T>& param_ref(const std::string& name) const {
    return const_cast<ParamSet<T>&>(params_).at(name);
  }

  // Graph::param needs a mutable parameter (gradients accumulate into it);
  // forward passes are logically const on the model.
  Var bind(Graph<T>& g, const std::string& name) const { return g.param(param_ref(name)); }

  Var ln(Graph<T>& g, Var x, const std::string& name) const {
    return g.layer_norm(x, bind(g, name + ".g"), bind(g, name + ".b"));
  }

  Var ffn(Graph<T>& g, Var x, const std::string& name) const {
    Var h = g.relu(g.linear(x, bind(g, name + ".w1"), bind(g, name + ".b1")));
    return g.linear(h, bind(g, name + ".w2"), bind(g, name + ".b2"));
  }

  Var attention_block(Graph<T>& g, Var xq, Var xkv, const std::string& name, const AttentionSpec& spec) const {
    Var q = g.linear(xq, bind(g, name + ".wq"), bind(g, name + ".bq"));
    Var k = g.linear(xkv, bind(g, name + ".wk"), bind(g, name + ".bk"));
    Var v = g.linear(xkv, bind(g, name + ".wv"), bind(g, name + ".bv"));
    Var a = g.attention(q, k, v, spec);
    return g.linear(a, bind(g, name + ".wo"), bind(g, name + ".bo"));
  }

  std::pair<Var, Var> lstm_update(Graph<T>& g, Var gates, Var c) const {
    const int d = cfg_.d_model;
    Var i = g.sigmoid(g.slice_cols(gates, 0, d));
    Var f = g.sigmoid(g.slice_cols(gates, d, d));
    Var u = g.tanh(g.slice_cols(gates, 2 * d, d));
    Var o = g.sigmoid(g.slice_cols(gates, 3 * d, d));
    Var c2 = g.add(g.mul(f, c), g.mul(i, u));
    Var h2 = g.mul(o, g.tanh(c2));
    return {h2, c2};
  }

  Var add_positions(Graph<T>& g, Var rows, int batch, int len) const {
    check_positions(len);
    Mat<T> pos(batch * len, cfg_.d_model);
    for (int b = 0; b < batch; ++b) pos.middleRows(b * len, len) = positions_.topRows(len);
    return g.add(g.scale(rows, std::sqrt(static_cast<T>(cfg_.d_model))), g.constant(std::move(pos)));
  }

  void build_positions() {
    positions_.resize(cfg_.max_positions, cfg_.d_model);
    for (int pos = 0; pos < cfg_.max_positions; ++pos)
      for (int i = 0; i < cfg_.d_model; ++i) {
        const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / cfg_.d_model);
        positions_(pos, i) = static_cast<T>(i % 2 == 0 ? std::sin(pos * rate) : std::cos(pos * rate));
      }
  }

  void init_params() {
    std::mt19937_64 rng(cfg_.init_seed ^ 0x5EC0DE);
    const int d = cfg_.d_model;
    const int V = vocab_.size();
    auto normal = [&rng](int r, int c, double sd) {
      std::normal_distribution<double> dist(0.0, sd);
      Mat<T> m(r, c);
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(dist(rng));
      return m;
    };
    auto xavier = [&](int r, int c) { return normal(r, c, std::sqrt(2.0 / (r + c))); };
    auto zeros = [](int r, int c) { return Mat<T>(Mat<T>::Zero(r, c)); };
    auto ones = [](int r, int c) { return Mat<T>(Mat<T>::Ones(r, c)); };
    auto add_ln = [&](const std::string& n) {
      params_.add(n + ".g", ones(1, d));
      params_.add(n + ".b", zeros(1, d));
    };
    auto add_attn = [&](const std::string& n) {
      for (const char* w : {"q", "k", "v", "o"}) {
        params_.add(n + ".w" + w, xavier(d, d));
        params_.add(n + ".b" + w, zeros(1, d));
      }
    };
    auto add_ffn = [&](const std::string& n) {
      params_.add(n + ".w1", xavier(d, cfg_.ff_dim));
      params_.add(n + ".b1", zeros(1, cfg_.ff_dim));
      params_.add(n + ".w2", xavier(cfg_.ff_dim, d));
      params_.add(n + ".b2", zeros(1, d));
    };

    params_.add("embed", normal(V, d, 1.0 / std::sqrt(static_cast<double>(d))));
    params_.add("out_bias", zeros(1, V));
    for (int l = 0; l < cfg_.enc_layers; ++l) {
      const std::string pre = "enc" + std::to_string(l) + ".";
      add_ln(pre + "ln1");
      add_attn(pre + "self");
      add_ln(pre + "ln2");
      add_ffn(pre + "ffn");
    }
    add_ln("enc.final_ln");
    for (int l = 0; l < cfg_.dec_layers; ++l) {
      const std::string pre = "dec" + std::to_string(l) + ".";
      add_ln(pre + "ln1");
      add_attn(pre + "self");
      add_ln(pre + "ln2");
      add_attn(pre + "cross");
      add_ln(pre + "ln3");
      add_ffn(pre + "ffn");
    }
    add_ln("dec.final_ln");

    const int F = cfg_.feature_dim;
    params_.add("adapter.init_w", xavier(F, d));
    params_.add("adapter.init_b", normal(1, d, 0.1));
    params_.add("adapter.input", normal(1, d, 1.0));
    params_.add("adapter.wx", xavier(d, 4 * d));
    params_.add("adapter.wh", xavier(d, 4 * d));
    params_.add("adapter.b", normal(1, 4 * d, 0.1));

    params_.add("agg.cls_w", xavier(d, F));
    params_.add("agg.cls_b", zeros(1, F));
    params_.add("agg.rnn_wx", xavier(d, 4 * d));
    params_.add("agg.rnn_wh", xavier(d, 4 * d));
    params_.add("agg.rnn_b", zeros(1, 4 * d));
    params_.add("agg.rnn_out_w", xavier(d, F));
    params_.add("agg.rnn_out_b", zeros(1, F));
  }

  ModelConfig cfg_;
  Vocabulary vocab_;
  ParamSet<T> params_;
  Mat<T> positions_;
};

}  // namespace ecft

#endif  // ECFT_MODEL_HPP
