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

// Tape-based reverse-mode differentiation over row-major matrices.
//
// A Graph owns every intermediate value of one forward pass. Ops append a
// node and (when recording) a closure that pushes the node's gradient back to
// its inputs. Parameters live outside the graph and receive accumulated
// gradients in Parameter::grad when Graph::backward runs.

#ifndef ECFT_AUTOGRAD_HPP
#define ECFT_AUTOGRAD_HPP

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace ecft {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
using RowVec = Eigen::Matrix<T, 1, Eigen::Dynamic, Eigen::RowMajor>;

/// Large negative value standing in for -inf on disallowed logits. Finite so
/// that softmax stays NaN-free even when a row is fully masked.
template <typename T>
constexpr T kNegSentinel = static_cast<T>(-1e9);

template <typename T>
struct Parameter {
  std::string name;
  Mat<T> value;
  Mat<T> grad;

  Parameter() = default;
  Parameter(std::string n, Mat<T> v)
      : name(std::move(n)), value(std::move(v)), grad(Mat<T>::Zero(value.rows(), value.cols())) {}

  void zero_grad() { grad.setZero(); }
};

/// Handle to a graph node. Only meaningful together with its Graph.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

struct AttentionSpec {
  int batch = 1;
  int query_len = 1;
  int key_len = 1;
  int heads = 1;
  bool causal = false;
  /// Number of valid (unpadded) keys per example; empty means all valid.
  std::vector<int> key_lengths;
};

template <typename T>
class Graph {
 public:
  explicit Graph(bool record = true) : record_(record) {}

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool recording() const { return record_; }
  std::size_t size() const { return nodes_.size(); }

  const Mat<T>& value(Var v) const { return nodes_[v.id]->value; }
  Mat<T>& mutable_value(Var v) { return nodes_[v.id]->value; }
  T scalar(Var v) const { return nodes_[v.id]->value(0, 0); }
  bool requires_grad(Var v) const { return nodes_[v.id]->requires_grad; }

  /// Gradient of the last backward pass w.r.t. this node (zero if untouched).
  Mat<T> grad(Var v) const {
    const Node& n = *nodes_[v.id];
    if (n.grad.size() == 0) return Mat<T>::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  Var constant(Mat<T> m) { return push(std::move(m), false); }

  /// Binds a parameter into the graph; repeated binds return the same node.
  Var param(Parameter<T>& p) {
    if (auto it = bound_.find(&p); it != bound_.end()) return it->second;
    Var v = push(p.value, record_);
    nodes_[v.id]->param = &p;
    bound_.emplace(&p, v);
    return v;
  }

  /// Leaf that takes gradients but is not tied to a Parameter (test inputs).
  Var input(Mat<T> m) { return push(std::move(m), record_); }

  // ---- backward -----------------------------------------------------------

  void backward(Var loss) {
    if (!record_) throw std::logic_error("backward on a non-recording graph");
    Node& root = *nodes_[loss.id];
    if (root.value.size() != 1) throw std::invalid_argument("backward expects a scalar");
    ensure_grad(loss.id);
    root.grad(0, 0) += T(1);
    for (int i = loss.id; i >= 0; --i) {
      Node& n = *nodes_[i];
      if (!n.requires_grad || n.grad.size() == 0) continue;
      if (n.backward) n.backward();
      if (n.param != nullptr) n.param->grad += n.grad;
    }
  }

  // ---- elementwise / linear ops -------------------------------------------

  Var matmul(Var a, Var b) {
    Var out = push(value(a) * value(b), any_grad(a, b));
    on_backward(out, [this, a, b, out] {
      const Mat<T>& g = nodes_[out.id]->grad;
      if (requires_grad(a)) acc(a, g * value(b).transpose());
      if (requires_grad(b)) acc(b, value(a).transpose() * g);
    });
    return out;
  }

  /// a * b^T
  Var matmul_nt(Var a, Var b) {
    Var out = push(value(a) * value(b).transpose(), any_grad(a, b));
    on_backward(out, [this, a, b, out] {
      const Mat<T>& g = nodes_[out.id]->grad;
      if (requires_grad(a)) acc(a, g * value(b));
      if (requires_grad(b)) acc(b, g.transpose() * value(a));
    });
    return out;
  }

  Var add(Var a, Var b) {
    check_same(a, b, "add");
    Var out = push(value(a) + value(b), any_grad(a, b));
    on_backward(out, [this, a, b, out] {
      const Mat<T>& g = nodes_[out.id]->grad;
      if (requires_grad(a)) acc(a, g);
      if (requires_grad(b)) acc(b, g);
    });
    return out;
  }

  Var sub(Var a, Var b) {
    check_same(a, b, "sub");
    Var out = push(value(a) - value(b), any_grad(a, b));
    on_backward(out, [this, a, b, out] {
      const Mat<T>& g = nodes_[out.id]->grad;
      if (requires_grad(a)) acc(a, g);
      if (requires_grad(b)) acc(b, -g);
    });
    return out;
  }

  Var mul(Var a, Var b) {
    check_same(a, b, "mul");
    Var out = push(value(a).cwiseProduct(value(b)), any_grad(a, b));
    on_backward(out, [this, a, b, out] {
      const Mat<T>& g = nodes_[out.id]->grad;
      if (requires_grad(a)) acc(a, g.cwiseProduct(value(b)));
      if (requires_grad(b)) acc(b, g.cwiseProduct(value(a)));
    });
    return out;
  }

  Var scale(Var a, T s) {
    Var out = push(value(a) * s, requires_grad(a));
    on_backward(out, [this, a, out, s] { acc(a, nodes_[out.id]->grad * s); });
    return out;
  }

  /// Adds a 1 x n row to every row of a.
  Var add_row(Var a, Var row) {
    if (value(row).rows() != 1 || value(row).cols() != value(a).cols())
      throw std::invalid_argument("add_row: shape mismatch");
    Mat<T> v = value(a);
    v.rowwise() += value(row).row(0);
    Var out = push(std::move(v), any_grad(a, row));
    on_backward(out, [this, a, row, out] {
      const Mat<T>& g = nodes_[out.id]->grad;
      if (requires_grad(a)) acc(a, g);
      if (requires_grad(row)) acc(row, g.colwise().sum());
    });
    return out;
  }

  Var linear(Var x, Var w, Var b) { return add_row(matmul(x, w), b); }

  Var relu(Var a) {
    Var out = push(value(a).cwiseMax(T(0)), requires_grad(a));
    on_backward(out, [this, a, out] {
      const Mat<T>& g = nodes_[out.id]->grad;
      acc(a, g.cwiseProduct((value(a).array() > T(0)).template cast<T>().matrix()));
    });
    return out;
  }

  Var sigmoid(Var a) {
    Mat<T> s = (T(1) / (T(1) + (-value(a).array()).exp())).matrix();
    Var out = push(std::move(s), requires_grad(a));
    on_backward(out, [this, a, out] {
      const Mat<T>& y = value(out);
      acc(a, (nodes_[out.id]->grad.array() * y.array() * (T(1) - y.array())).matrix());
    });
    return out;
  }

  Var tanh(Var a) {
    Var out = push(value(a).array().tanh().matrix(), requires_grad(a));
    on_backward(out, [this, a, out] {
      const Mat<T>& y = value(out);
      acc(a, (nodes_[out.id]->grad.array() * (T(1) - y.array().square())).matrix());
    });
    return out;
  }

  /// Row-wise blend: out.row(i) = keep[i] ? a.row(i) : b.row(i).
  Var select_rows(Var a, Var b, std::vector<char> keep) {
    check_same(a, b, "select_rows");
    Mat<T> v = value(b);
    for (Eigen::Index i = 0; i < v.rows(); ++i)
      if (keep[i]) v.row(i) = value(a).row(i);
    Var out = push(std::move(v), any_grad(a, b));
    on_backward(out, [this, a, b, out, keep = std::move(keep)] {
      const Mat<T>& g = nodes_[out.id]->grad;
      Mat<T> ga = Mat<T>::Zero(g.rows(), g.cols());
      Mat<T> gb = Mat<T>::Zero(g.rows(), g.cols());
      for (Eigen::Index i = 0; i < g.rows(); ++i) (keep[i] ? ga : gb).row(i) = g.row(i);
      if (requires_grad(a)) acc(a, ga);
      if (requires_grad(b)) acc(b, gb);
    });
    return out;
  }

  // ---- shape ops ----------------------------------------------------------

  Var slice_rows(Var a, int start, int count) {
    Var out = push(value(a).middleRows(start, count), requires_grad(a));
    on_backward(out, [this, a, out, start, count] {
      Mat<T> g = Mat<T>::Zero(value(a).rows(), value(a).cols());
      g.middleRows(start, count) = nodes_[out.id]->grad;
      acc(a, g);
    });
    return out;
  }

  Var slice_cols(Var a, int start, int count) {
    Var out = push(value(a).middleCols(start, count), requires_grad(a));
    on_backward(out, [this, a, out, start, count] {
      Mat<T> g = Mat<T>::Zero(value(a).rows(), value(a).cols());
      g.middleCols(start, count) = nodes_[out.id]->grad;
      acc(a, g);
    });
    return out;
  }

  Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
    Eigen::Index rows = 0;
    const Eigen::Index cols = value(parts[0]).cols();
    bool rg = false;
    for (Var p : parts) {
      if (value(p).cols() != cols) throw std::invalid_argument("concat_rows: column mismatch");
      rows += value(p).rows();
      rg = rg || requires_grad(p);
    }
    Mat<T> v(rows, cols);
    Eigen::Index r = 0;
    for (Var p : parts) {
      v.middleRows(r, value(p).rows()) = value(p);
      r += value(p).rows();
    }
    Var out = push(std::move(v), rg);
    on_backward(out, [this, parts, out] {
      const Mat<T>& g = nodes_[out.id]->grad;
      Eigen::Index r0 = 0;
      for (Var p : parts) {
        const Eigen::Index n = value(p).rows();
        if (requires_grad(p)) acc(p, g.middleRows(r0, n));
        r0 += n;
      }
    });
    return out;
  }

  /// out.row(i) = a.row(index[i]), or zeros where index[i] < 0.
  Var gather_rows(Var a, std::vector<int> index) {
    const Mat<T>& src = value(a);
    Mat<T> v = Mat<T>::Zero(static_cast<Eigen::Index>(index.size()), src.cols());
    for (std::size_t i = 0; i < index.size(); ++i) {
      if (index[i] >= src.rows()) throw std::out_of_range("gather_rows: index out of range");
      if (index[i] >= 0) v.row(static_cast<Eigen::Index>(i)) = src.row(index[i]);
    }
    Var out = push(std::move(v), requires_grad(a));
    on_backward(out, [this, a, out, index = std::move(index)] {
      const Mat<T>& g = nodes_[out.id]->grad;
      Mat<T> ga = Mat<T>::Zero(value(a).rows(), value(a).cols());
      for (std::size_t i = 0; i < index.size(); ++i)
        if (index[i] >= 0) ga.row(index[i]) += g.row(static_cast<Eigen::Index>(i));
      acc(a, ga);
    });
    return out;
  }

  // ---- reductions ---------------------------------------------------------

  Var sum(Var a) {
    Mat<T> v(1, 1);
    v(0, 0) = value(a).sum();
    Var out = push(std::move(v), requires_grad(a));
    on_backward(out, [this, a, out] {
      acc(a, Mat<T>::Constant(value(a).rows(), value(a).cols(), nodes_[out.id]->grad(0, 0)));
    });
    return out;
  }

  Var mean(Var a) { return scale(sum(a), T(1) / static_cast<T>(value(a).size())); }

  /// Weighted sum of scalars.
  Var combine(const std::vector<std::pair<Var, T>>& terms) {
    Mat<T> v = Mat<T>::Zero(1, 1);
    bool rg = false;
    for (auto [t, w] : terms) {
      v(0, 0) += w * scalar(t);
      rg = rg || requires_grad(t);
    }
    Var out = push(std::move(v), rg);
    on_backward(out, [this, terms, out] {
      const T g = nodes_[out.id]->grad(0, 0);
      for (auto [t, w] : terms)
        if (requires_grad(t)) acc(t, Mat<T>::Constant(1, 1, g * w));
    });
    return out;
  }

  // ---- normalization / attention -----------------------------------------

  Var layer_norm(Var x, Var gamma, Var beta, T eps = T(1e-5)) {
    const Mat<T>& xv = value(x);
    const Eigen::Index n = xv.cols();
    Mat<T> xhat(xv.rows(), n);
    std::vector<T> inv_std(static_cast<std::size_t>(xv.rows()));
    for (Eigen::Index i = 0; i < xv.rows(); ++i) {
      const T mu = xv.row(i).mean();
      const T var = (xv.row(i).array() - mu).square().mean();
      const T is = T(1) / std::sqrt(var + eps);
      inv_std[static_cast<std::size_t>(i)] = is;
      xhat.row(i) = (xv.row(i).array() - mu) * is;
    }
    Mat<T> y = xhat.array().rowwise() * value(gamma).row(0).array();
    y.rowwise() += value(beta).row(0);
    Var out = push(std::move(y), any_grad(x, gamma) || requires_grad(beta));
    on_backward(out, [this, x, gamma, beta, out, xhat = std::move(xhat),
                      inv_std = std::move(inv_std)] {
      const Mat<T>& g = nodes_[out.id]->grad;
      if (requires_grad(gamma)) acc(gamma, g.cwiseProduct(xhat).colwise().sum());
      if (requires_grad(beta)) acc(beta, g.colwise().sum());
      if (requires_grad(x)) {
        const Eigen::Index n = g.cols();
        Mat<T> gx(g.rows(), n);
        for (Eigen::Index i = 0; i < g.rows(); ++i) {
          RowVec<T> gh = g.row(i).cwiseProduct(value(gamma).row(0));
          const T m1 = gh.mean();
          const T m2 = gh.cwiseProduct(xhat.row(i)).mean();
          gx.row(i) = (gh.array() - m1 - xhat.row(i).array() * m2) * inv_std[static_cast<std::size_t>(i)];
        }
        acc(x, gx);
      }
    });
    return out;
  }

  /// Multi-head scaled dot-product attention over already-projected q, k, v.
  /// q is (batch*query_len) x d, k and v are (batch*key_len) x d; heads split
  /// the d columns evenly.
  Var attention(Var q, Var k, Var v, AttentionSpec spec) {
    const Mat<T>& Q = value(q);
    const Mat<T>& K = value(k);
    const Mat<T>& V = value(v);
    const int d = static_cast<int>(Q.cols());
    if (d % spec.heads != 0) throw std::invalid_argument("attention: heads must divide d");
    if (Q.rows() != spec.batch * spec.query_len || K.rows() != spec.batch * spec.key_len ||
        V.rows() != K.rows())
      throw std::invalid_argument("attention: shape mismatch");
    const int dh = d / spec.heads;
    const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(dh));
    auto probs = std::make_shared<std::vector<Mat<T>>>(
        static_cast<std::size_t>(spec.batch * spec.heads));
    Mat<T> O = Mat<T>::Zero(Q.rows(), d);
    for (int b = 0; b < spec.batch; ++b) {
      const int valid = spec.key_lengths.empty() ? spec.key_len : spec.key_lengths[b];
      for (int h = 0; h < spec.heads; ++h) {
        auto qb = Q.block(b * spec.query_len, h * dh, spec.query_len, dh);
        auto kb = K.block(b * spec.key_len, h * dh, spec.key_len, dh);
        auto vb = V.block(b * spec.key_len, h * dh, spec.key_len, dh);
        Mat<T> s = (qb * kb.transpose()) * inv_sqrt;
        for (int i = 0; i < spec.query_len; ++i) {
          int limit = valid;
          if (spec.causal) limit = std::min(limit, i + 1);
          limit = std::max(limit, 1);
          for (int j = limit; j < spec.key_len; ++j) s(i, j) = -std::numeric_limits<T>::infinity();
          const T mx = s.row(i).maxCoeff();
          s.row(i) = (s.row(i).array() - mx).exp();
          s.row(i) /= s.row(i).sum();
        }
        O.block(b * spec.query_len, h * dh, spec.query_len, dh) = s * vb;
        (*probs)[static_cast<std::size_t>(b * spec.heads + h)] = std::move(s);
      }
    }
    Var out = push(std::move(O), any_grad(q, k) || requires_grad(v));
    on_backward(out, [this, q, k, v, out, spec, probs, dh, inv_sqrt] {
      const Mat<T>& G = nodes_[out.id]->grad;
      const Mat<T>& Q = value(q);
      const Mat<T>& K = value(k);
      const Mat<T>& V = value(v);
      Mat<T> gQ = Mat<T>::Zero(Q.rows(), Q.cols());
      Mat<T> gK = Mat<T>::Zero(K.rows(), K.cols());
      Mat<T> gV = Mat<T>::Zero(V.rows(), V.cols());
      for (int b = 0; b < spec.batch; ++b) {
        for (int h = 0; h < spec.heads; ++h) {
          const Mat<T>& P = (*probs)[static_cast<std::size_t>(b * spec.heads + h)];
          auto gb = G.block(b * spec.query_len, h * dh, spec.query_len, dh);
          auto qb = Q.block(b * spec.query_len, h * dh, spec.query_len, dh);
          auto kb = K.block(b * spec.key_len, h * dh, spec.key_len, dh);
          auto vb = V.block(b * spec.key_len, h * dh, spec.key_len, dh);
          gV.block(b * spec.key_len, h * dh, spec.key_len, dh) += P.transpose() * gb;
          Mat<T> dP = gb * vb.transpose();
          Mat<T> dS = P.cwiseProduct(dP);
          for (int i = 0; i < spec.query_len; ++i) {
            const T rs = dS.row(i).sum();
            dS.row(i) -= P.row(i) * rs;
          }
          dS *= inv_sqrt;
          gQ.block(b * spec.query_len, h * dh, spec.query_len, dh) += dS * kb;
          gK.block(b * spec.key_len, h * dh, spec.key_len, dh) += dS.transpose() * qb;
        }
      }
      if (requires_grad(q)) acc(q, gQ);
      if (requires_grad(k)) acc(k, gK);
      if (requires_grad(v)) acc(v, gV);
    });
    return out;
  }

  // ---- losses and discrete-sampling ops -----------------------------------

  /// Mean token cross-entropy of row-wise softmax(logits) against targets;
  /// rows whose target equals ignore_index are skipped.
  Var cross_entropy(Var logits, std::vector<int> targets, int ignore_index = -1) {
    const Mat<T>& L = value(logits);
    if (static_cast<Eigen::Index>(targets.size()) != L.rows())
      throw std::invalid_argument("cross_entropy: target count mismatch");
    Mat<T> probs(L.rows(), L.cols());
    T total = 0;
    int count = 0;
    for (Eigen::Index i = 0; i < L.rows(); ++i) {
      const int t = targets[static_cast<std::size_t>(i)];
      if (t == ignore_index) continue;
      if (t < 0 || t >= L.cols()) throw std::out_of_range("cross_entropy: target out of range");
      const T mx = L.row(i).maxCoeff();
      probs.row(i) = (L.row(i).array() - mx).exp();
      const T z = probs.row(i).sum();
      probs.row(i) /= z;
      total += -(L(i, t) - mx - std::log(z));
      ++count;
    }
    Mat<T> v(1, 1);
    v(0, 0) = count > 0 ? total / static_cast<T>(count) : T(0);
    Var out = push(std::move(v), requires_grad(logits));
    on_backward(out, [this, logits, out, targets = std::move(targets), ignore_index, count,
                      probs = std::move(probs)] {
      if (count == 0) return;
      const T g = nodes_[out.id]->grad(0, 0) / static_cast<T>(count);
      Mat<T> gl = Mat<T>::Zero(probs.rows(), probs.cols());
      for (Eigen::Index i = 0; i < probs.rows(); ++i) {
        const int t = targets[static_cast<std::size_t>(i)];
        if (t == ignore_index) continue;
        gl.row(i) = probs.row(i) * g;
        gl(i, t) -= g;
      }
      acc(logits, gl);
    });
    return out;
  }

  /// Elementwise logits * multiplier where allowed, sentinel elsewhere.
  Var constrain(Var logits, Mat<T> multiplier, std::vector<char> allowed) {
    const Mat<T>& L = value(logits);
    Mat<T> v = L.cwiseProduct(multiplier);
    for (Eigen::Index i = 0; i < v.size(); ++i)
      if (!allowed[static_cast<std::size_t>(i)]) v.data()[i] = kNegSentinel<T>;
    Var out = push(std::move(v), requires_grad(logits));
    on_backward(out, [this, logits, out, multiplier = std::move(multiplier),
                      allowed = std::move(allowed)] {
      Mat<T> g = nodes_[out.id]->grad.cwiseProduct(multiplier);
      for (Eigen::Index i = 0; i < g.size(); ++i)
        if (!allowed[static_cast<std::size_t>(i)]) g.data()[i] = T(0);
      acc(logits, g);
    });
    return out;
  }

  /// Straight-through Gumbel-Softmax. Forward value: row-wise one-hot of
  /// argmax((logits + noise) / tau). Backward: gradient of
  /// softmax((logits + noise) / tau). The relaxed probabilities are written
  /// to *soft when non-null.
  Var gumbel_straight_through(Var logits, const Mat<T>& noise, T tau, Mat<T>* soft = nullptr) {
    if (!(tau > T(0))) throw std::invalid_argument("gumbel: tau must be positive");
    const Mat<T>& L = value(logits);
    Mat<T> y = (L + noise) / tau;
    Mat<T> hard = Mat<T>::Zero(L.rows(), L.cols());
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
      Eigen::Index arg = 0;
      y.row(i).maxCoeff(&arg);
      hard(i, arg) = T(1);
      const T mx = y(i, arg);
      y.row(i) = (y.row(i).array() - mx).exp();
      y.row(i) /= y.row(i).sum();
    }
    if (soft != nullptr) *soft = y;
    Var out = push(std::move(hard), requires_grad(logits));
    on_backward(out, [this, logits, out, y = std::move(y), tau] {
      const Mat<T>& g = nodes_[out.id]->grad;
      Mat<T> gl(g.rows(), g.cols());
      for (Eigen::Index i = 0; i < g.rows(); ++i) {
        const T dot = g.row(i).dot(y.row(i));
        gl.row(i) = (y.row(i).array() * (g.row(i).array() - dot)).matrix() / tau;
      }
      acc(logits, gl);
    });
    return out;
  }

  /// Mean over rows of KL between row-wise softmax distributions of p_logits
  /// (differentiable) and q_logits (held constant), both renormalized over the
  /// allowed columns. reverse=true computes KL(q || p) instead.
  Var masked_kl(Var p_logits, const Mat<T>& q_logits, const std::vector<char>& allowed_cols,
                bool reverse = false) {
    const Mat<T>& P = value(p_logits);
    if (q_logits.rows() != P.rows() || q_logits.cols() != P.cols())
      throw std::invalid_argument("masked_kl: shape mismatch");
    const Eigen::Index rows = P.rows();
    Mat<T> pp = masked_softmax(P, allowed_cols);
    Mat<T> qq = masked_softmax(q_logits, allowed_cols);
    Mat<T> logp = safe_log(pp);
    Mat<T> logq = safe_log(qq);
    T total = 0;
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index j = 0; j < P.cols(); ++j) {
        if (!allowed_cols[static_cast<std::size_t>(j)]) continue;
        if (!reverse) {
          if (pp(i, j) > T(0)) total += pp(i, j) * (logp(i, j) - logq(i, j));
        } else {
          if (qq(i, j) > T(0)) total += qq(i, j) * (logq(i, j) - logp(i, j));
        }
      }
    }
    Mat<T> v(1, 1);
    v(0, 0) = rows > 0 ? std::max(T(0), total / static_cast<T>(rows)) : T(0);
    Var out = push(std::move(v), requires_grad(p_logits));
    on_backward(out, [this, p_logits, out, pp = std::move(pp), qq = std::move(qq),
                      logp = std::move(logp), logq = std::move(logq), allowed_cols, reverse] {
      const Eigen::Index rows = pp.rows();
      if (rows == 0) return;
      const T g = nodes_[out.id]->grad(0, 0) / static_cast<T>(rows);
      Mat<T> gl = Mat<T>::Zero(pp.rows(), pp.cols());
      for (Eigen::Index i = 0; i < rows; ++i) {
        if (!reverse) {
          // d/dz KL(p||q) = p * (log p - log q - KL_row)
          T kl_row = 0;
          for (Eigen::Index j = 0; j < pp.cols(); ++j)
            if (allowed_cols[static_cast<std::size_t>(j)] && pp(i, j) > T(0))
              kl_row += pp(i, j) * (logp(i, j) - logq(i, j));
          for (Eigen::Index j = 0; j < pp.cols(); ++j)
            if (allowed_cols[static_cast<std::size_t>(j)] && pp(i, j) > T(0))
              gl(i, j) = g * pp(i, j) * (logp(i, j) - logq(i, j) - kl_row);
        } else {
          // d/dz KL(q||p) = p - q
          for (Eigen::Index j = 0; j < pp.cols(); ++j)
            if (allowed_cols[static_cast<std::size_t>(j)]) gl(i, j) = g * (pp(i, j) - qq(i, j));
        }
      }
      acc(p_logits, gl);
    });
    return out;
  }

  /// Candidate scores from a prediction r (batch x F) and constant candidates
  /// ((batch*C) x F). reciprocal: 1 / (MSE + eps); otherwise -MSE.
  Var inverse_mse_scores(Var r, const Mat<T>& candidates, int num_candidates, T eps,
                         bool reciprocal = true) {
    const Mat<T>& R = value(r);
    const int B = static_cast<int>(R.rows());
    const Eigen::Index F = R.cols();
    if (candidates.rows() != B * num_candidates || candidates.cols() != F)
      throw std::invalid_argument("inverse_mse_scores: dimension mismatch");
    Mat<T> mse(B, num_candidates);
    for (int b = 0; b < B; ++b)
      for (int c = 0; c < num_candidates; ++c)
        mse(b, c) = (candidates.row(b * num_candidates + c) - R.row(b)).squaredNorm() / static_cast<T>(F);
    Mat<T> s = reciprocal ? (T(1) / (mse.array() + eps)).matrix() : Mat<T>(-mse);
    Var out = push(std::move(s), requires_grad(r));
    on_backward(out, [this, r, out, candidates, num_candidates, eps, reciprocal, mse = std::move(mse)] {
      const Mat<T>& G = nodes_[out.id]->grad;
      const Mat<T>& R = value(r);
      const Eigen::Index F = R.cols();
      Mat<T> gr = Mat<T>::Zero(R.rows(), F);
      for (Eigen::Index b = 0; b < R.rows(); ++b) {
        for (int c = 0; c < num_candidates; ++c) {
          const T m = mse(b, c);
          const T dscore_dmse = reciprocal ? -T(1) / ((m + eps) * (m + eps)) : T(-1);
          // d mse / d r = 2 (r - cand) / F
          gr.row(b) += G(b, c) * dscore_dmse * T(2) / static_cast<T>(F) *
                       (R.row(b) - candidates.row(b * num_candidates + c));
        }
      }
      acc(r, gr);
    });
    return out;
  }

  static Mat<T> masked_softmax(const Mat<T>& logits, const std::vector<char>& allowed_cols) {
    Mat<T> out = Mat<T>::Zero(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
      T mx = -std::numeric_limits<T>::infinity();
      for (Eigen::Index j = 0; j < logits.cols(); ++j)
        if (allowed_cols[static_cast<std::size_t>(j)]) mx = std::max(mx, logits(i, j));
      T z = 0;
      for (Eigen::Index j = 0; j < logits.cols(); ++j)
        if (allowed_cols[static_cast<std::size_t>(j)]) z += (out(i, j) = std::exp(logits(i, j) - mx));
      if (z > T(0)) out.row(i) /= z;
    }
    return out;
  }

 private:
  struct Node {
    Mat<T> value;
    Mat<T> grad;
    std::function<void()> backward;
    Parameter<T>* param = nullptr;
    bool requires_grad = false;
  };

  static Mat<T> safe_log(const Mat<T>& p) {
    return p.unaryExpr([](T x) { return x > T(0) ? std::log(x) : T(0); });
  }

  Var push(Mat<T> value, bool requires_grad) {
    auto n = std::make_unique<Node>();
    n->value = std::move(value);
    n->requires_grad = record_ && requires_grad;
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  template <typename F>
  void on_backward(Var out, F&& fn) {
    Node& n = *nodes_[out.id];
    if (n.requires_grad) n.backward = std::forward<F>(fn);
  }

  bool any_grad(Var a, Var b) const { return requires_grad(a) || requires_grad(b); }

  void check_same(Var a, Var b, const char* op) const {
    if (value(a).rows() != value(b).rows() || value(a).cols() != value(b).cols())
      throw std::invalid_argument(std::string(op) + ": shape mismatch");
  }

  void ensure_grad(int id) {
    Node& n = *nodes_[id];
    if (n.grad.size() == 0) n.grad = Mat<T>::Zero(n.value.rows(), n.value.cols());
  }

  template <typename M>
  void acc(Var v, const M& g) {
    Node& n = *nodes_[v.id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) n.grad = Mat<T>::Zero(n.value.rows(), n.value.cols());
    n.grad += g;
  }

  bool record_;
  std::vector<std::unique_ptr<Node>> nodes_;
  std::unordered_map<const Parameter<T>*, Var> bound_;
};

}  // namespace ecft

#endif  // ECFT_AUTOGRAD_HPP
