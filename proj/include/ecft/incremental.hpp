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

// Gradient-free decoding with per-row key/value caches. Computes the same
// function as Seq2Seq::decode_embedded one position at a time.

#ifndef ECFT_INCREMENTAL_HPP
#define ECFT_INCREMENTAL_HPP

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "ecft/model.hpp"

namespace ecft {

/// Plain-matrix encoder output for inference.
template <typename T>
struct EncodedBatch {
  Mat<T> states;  // (batch*len) x d
  int batch = 0;
  int len = 0;
  std::vector<int> lengths;
};

template <typename T>
EncodedBatch<T> encode_values(const Seq2Seq<T>& model, const std::vector<Sentence>& batch,
                              const std::vector<LangId>& langs) {
  Graph<T> g(false);
  Memory m = model.encode(g, batch, langs, false);
  return EncodedBatch<T>{g.value(m.states), m.batch, m.len, m.lengths};
}

template <typename T>
class IncrementalDecoder {
 public:
  /// One decoding row per entry of row_source, each attending to example
  /// row_source[i] of the encoded batch.
  IncrementalDecoder(const Seq2Seq<T>& model, const EncodedBatch<T>& memory, std::vector<int> row_source)
      : model_(model), mem_len_(memory.len), mem_lengths_(memory.lengths), source_(std::move(row_source)) {
    if (memory.len == 0 || memory.batch == 0) throw std::invalid_argument("decode: empty memory");
    const ModelConfig& cfg = model.config();
    const int layers = cfg.dec_layers;
    cross_k_.resize(static_cast<std::size_t>(layers));
    cross_v_.resize(static_cast<std::size_t>(layers));
    for (int l = 0; l < layers; ++l) {
      const std::string pre = "dec" + std::to_string(l) + ".cross.";
      cross_k_[l] = affine(memory.states, pre + "wk", pre + "bk");
      cross_v_[l] = affine(memory.states, pre + "wv", pre + "bv");
    }
    self_k_.assign(static_cast<std::size_t>(layers), std::vector<Mat<T>>(source_.size()));
    self_v_.assign(static_cast<std::size_t>(layers), std::vector<Mat<T>>(source_.size()));
  }

  int rows() const { return static_cast<int>(source_.size()); }
  int position() const { return pos_; }

  /// Feeds one token per row at the current position; returns next-token
  /// logits (rows x |V|).
  Mat<T> step(const std::vector<Token>& tokens) {
    if (static_cast<int>(tokens.size()) != rows()) throw std::invalid_argument("step: row count mismatch");
    const ModelConfig& cfg = model_.config();
    model_.check_positions(pos_ + 1);
    const int d = cfg.d_model;
    const int R = rows();
    const Mat<T>& E = model_.weight("embed");
    Mat<T> x(R, d);
    const T sq = std::sqrt(static_cast<T>(d));
    for (int r = 0; r < R; ++r) x.row(r) = E.row(tokens[static_cast<std::size_t>(r)]) * sq + model_.positions().row(pos_);

    const int H = cfg.heads;
    const int dh = d / H;
    const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(dh));
    for (int l = 0; l < cfg.dec_layers; ++l) {
      const std::string pre = "dec" + std::to_string(l) + ".";
      // causal self-attention over the cache
      Mat<T> h = layer_norm(x, pre + "ln1");
      Mat<T> q = affine(h, pre + "self.wq", pre + "self.bq");
      Mat<T> k = affine(h, pre + "self.wk", pre + "self.bk");
      Mat<T> v = affine(h, pre + "self.wv", pre + "self.bv");
      Mat<T> att(R, d);
      for (int r = 0; r < R; ++r) {
        Mat<T>& kc = self_k_[l][static_cast<std::size_t>(r)];
        Mat<T>& vc = self_v_[l][static_cast<std::size_t>(r)];
        kc.conservativeResize(pos_ + 1, d);
        vc.conservativeResize(pos_ + 1, d);
        kc.row(pos_) = k.row(r);
        vc.row(pos_) = v.row(r);
        for (int hd = 0; hd < H; ++hd)
          att.block(r, hd * dh, 1, dh) =
              attend(q.block(r, hd * dh, 1, dh), kc.middleCols(hd * dh, dh), vc.middleCols(hd * dh, dh), pos_ + 1,
                     inv_sqrt);
      }
      x += affine(att, pre + "self.wo", pre + "self.bo");

      h = layer_norm(x, pre + "ln2");
      q = affine(h, pre + "cross.wq", pre + "cross.bq");
      for (int r = 0; r < R; ++r) {
        const int src = source_[static_cast<std::size_t>(r)];
        const int valid = std::max(1, mem_lengths_[static_cast<std::size_t>(src)]);
        for (int hd = 0; hd < H; ++hd)
          att.block(r, hd * dh, 1, dh) =
              attend(q.block(r, hd * dh, 1, dh), cross_k_[l].block(src * mem_len_, hd * dh, mem_len_, dh),
                     cross_v_[l].block(src * mem_len_, hd * dh, mem_len_, dh), valid, inv_sqrt);
      }
      x += affine(att, pre + "cross.wo", pre + "cross.bo");

      h = layer_norm(x, pre + "ln3");
      Mat<T> f = affine(h, pre + "ffn.w1", pre + "ffn.b1").cwiseMax(T(0));
      x += affine(f, pre + "ffn.w2", pre + "ffn.b2");
    }
    x = layer_norm(x, "dec.final_ln");
    Mat<T> logits = x * E.transpose();
    logits.rowwise() += model_.weight("out_bias").row(0);
    ++pos_;
    return logits;
  }

  /// New row i continues old row parents[i].
  void reorder(const std::vector<int>& parents) {
    std::vector<int> src;
    for (int p : parents) src.push_back(source_[static_cast<std::size_t>(p)]);
    for (std::size_t l = 0; l < self_k_.size(); ++l) {
      std::vector<Mat<T>> nk, nv;
      for (int p : parents) {
        nk.push_back(self_k_[l][static_cast<std::size_t>(p)]);
        nv.push_back(self_v_[l][static_cast<std::size_t>(p)]);
      }
      self_k_[l] = std::move(nk);
      self_v_[l] = std::move(nv);
    }
    source_ = std::move(src);
  }

 private:
  Mat<T> affine(const Mat<T>& x, const std::string& w, const std::string& b) const {
    Mat<T> y = x * model_.weight(w);
    y.rowwise() += model_.weight(b).row(0);
    return y;
  }

  Mat<T> layer_norm(const Mat<T>& x, const std::string& name) const {
    const auto& gam = model_.weight(name + ".g");
    const auto& bet = model_.weight(name + ".b");
    Mat<T> y(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const T mu = x.row(i).mean();
      const T var = (x.row(i).array() - mu).square().mean();
      y.row(i) = ((x.row(i).array() - mu) / std::sqrt(var + T(1e-5))).matrix().cwiseProduct(gam.row(0)) + bet.row(0);
    }
    return y;
  }

  template <typename Q, typename K, typename V>
  static RowVec<T> attend(const Q& q, const K& k, const V& v, int valid, T inv_sqrt) {
    RowVec<T> s = (q * k.topRows(valid).transpose()) * inv_sqrt;
    const T mx = s.maxCoeff();
    s = (s.array() - mx).exp();
    s /= s.sum();
    return s * v.topRows(valid);
  }

  const Seq2Seq<T>& model_;
  int mem_len_;
  std::vector<int> mem_lengths_;
  std::vector<int> source_;
  std::vector<Mat<T>> cross_k_, cross_v_;
  std::vector<std::vector<Mat<T>>> self_k_, self_v_;
  int pos_ = 0;
};

}  // namespace ecft

#endif  // ECFT_INCREMENTAL_HPP
