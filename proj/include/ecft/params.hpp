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

#ifndef ECFT_PARAMS_HPP
#define ECFT_PARAMS_HPP

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "ecft/autograd.hpp"

namespace ecft {

/// Named parameter tensors with stable addresses.
template <typename T>
class ParamSet {
 public:
  ParamSet() = default;
  ParamSet(const ParamSet& other) { *this = other; }
  ParamSet& operator=(const ParamSet& other) {
    if (this == &other) return *this;
    params_.clear();
    index_.clear();
    for (const auto& p : other.params_) add(p->name, p->value);
    return *this;
  }
  ParamSet(ParamSet&&) noexcept = default;
  ParamSet& operator=(ParamSet&&) noexcept = default;

  Parameter<T>& add(const std::string& name, Mat<T> value) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
    index_[name] = params_.size();
    params_.push_back(std::make_unique<Parameter<T>>(name, std::move(value)));
    return *params_.back();
  }

  Parameter<T>& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no parameter named " + name);
    return *params_[it->second];
  }
  const Parameter<T>& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no parameter named " + name);
    return *params_[it->second];
  }
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  std::size_t size() const { return params_.size(); }
  Parameter<T>& operator[](std::size_t i) { return *params_[i]; }
  const Parameter<T>& operator[](std::size_t i) const { return *params_[i]; }

  void zero_grad() {
    for (auto& p : params_) p->zero_grad();
  }

  std::size_t num_scalars() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p->value.size());
    return n;
  }

  /// Order-sensitive FNV-1a hash over names and raw values.
  std::uint64_t checksum() const {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](const void* data, std::size_t n) {
      const auto* b = static_cast<const unsigned char*>(data);
      for (std::size_t i = 0; i < n; ++i) h = (h ^ b[i]) * 1099511628211ULL;
    };
    for (const auto& p : params_) {
      mix(p->name.data(), p->name.size());
      mix(p->value.data(), static_cast<std::size_t>(p->value.size()) * sizeof(T));
    }
    return h;
  }

  double grad_norm() const {
    double s = 0;
    for (const auto& p : params_) s += static_cast<double>(p->grad.squaredNorm());
    return std::sqrt(s);
  }

 private:
  std::vector<std::unique_ptr<Parameter<T>>> params_;
  std::map<std::string, std::size_t> index_;
};

/// Adam with global-norm gradient clipping; the learning rate is supplied per
/// step by the caller's schedule.
template <typename T>
class Adam {
 public:
  struct Options {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  };

  Adam() = default;
  explicit Adam(Options o) : opt_(o) {}

  /// Clips gradients to clip_norm (if > 0) and applies one update. Returns the
  /// pre-clip gradient norm.
  double step(ParamSet<T>& params, double lr, double clip_norm) {
    if (m_.size() != params.size()) {
      m_.clear();
      v_.clear();
      for (std::size_t i = 0; i < params.size(); ++i) {
        m_.push_back(Mat<T>::Zero(params[i].value.rows(), params[i].value.cols()));
        v_.push_back(Mat<T>::Zero(params[i].value.rows(), params[i].value.cols()));
      }
    }
    const double norm = params.grad_norm();
    double scale = 1.0;
    if (clip_norm > 0 && norm > clip_norm) scale = clip_norm / (norm + 1e-12);
    ++t_;
    const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
    const T b1 = static_cast<T>(opt_.beta1);
    const T b2 = static_cast<T>(opt_.beta2);
    for (std::size_t i = 0; i < params.size(); ++i) {
      Parameter<T>& p = params[i];
      Mat<T> g = p.grad * static_cast<T>(scale);
      m_[i] = b1 * m_[i] + (T(1) - b1) * g;
      v_[i] = b2 * v_[i] + (T(1) - b2) * g.cwiseProduct(g);
      const T step_size = static_cast<T>(lr / bc1);
      const T denom_scale = static_cast<T>(1.0 / std::sqrt(bc2));
      p.value.array() -= step_size * m_[i].array() /
                         (v_[i].array().sqrt() * denom_scale + static_cast<T>(opt_.eps));
    }
    params.zero_grad();
    return norm;
  }

  void reset() {
    m_.clear();
    v_.clear();
    t_ = 0;
  }

  long long steps() const { return t_; }

 private:
  Options opt_;
  std::vector<Mat<T>> m_;
  std::vector<Mat<T>> v_;
  long long t_ = 0;
};

// ---------------------------------------------------------------------------
// Checkpoint archive
//
// Little-endian layout:
//   magic    8 bytes  "ECFTCKPT"
//   version  u32      (= 1)
//   dtype    u32      (4 = float32, 8 = float64)
//   cfg_hash u64
//   step     u64
//   meta_len u32, meta bytes (UTF-8 JSON with the model config)
//   count    u32
//   per tensor: name_len u32, name bytes, rows u32, cols u32, rows*cols values
//               in row-major order

struct CheckpointHeader {
  std::uint64_t config_hash = 0;
  std::uint64_t step = 0;
  std::string meta;
};

namespace detail {

template <typename V>
void write_pod(std::ostream& os, V v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <typename V>
V read_pod(std::istream& is) {
  V v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(V));
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

}  // namespace detail

inline constexpr char kCheckpointMagic[8] = {'E', 'C', 'F', 'T', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Writes atomically: the archive goes to <path>.tmp and is renamed into place.
template <typename T>
void save_checkpoint(const std::filesystem::path& path, const ParamSet<T>& params, const CheckpointHeader& header) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    os.write(kCheckpointMagic, 8);
    detail::write_pod<std::uint32_t>(os, kCheckpointVersion);
    detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(sizeof(T)));
    detail::write_pod<std::uint64_t>(os, header.config_hash);
    detail::write_pod<std::uint64_t>(os, header.step);
    detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(header.meta.size()));
    os.write(header.meta.data(), static_cast<std::streamsize>(header.meta.size()));
    detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
      const Parameter<T>& p = params[i];
      detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(p.name.size()));
      os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
      detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(p.value.rows()));
      detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(p.value.cols()));
      os.write(reinterpret_cast<const char*>(p.value.data()),
               static_cast<std::streamsize>(p.value.size() * static_cast<Eigen::Index>(sizeof(T))));
    }
    if (!os) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline CheckpointHeader read_checkpoint_header(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path.string());
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kCheckpointMagic, 8) != 0) throw std::runtime_error("not a checkpoint: " + path.string());
  if (detail::read_pod<std::uint32_t>(is) != kCheckpointVersion) throw std::runtime_error("unsupported checkpoint version");
  detail::read_pod<std::uint32_t>(is);
  CheckpointHeader h;
  h.config_hash = detail::read_pod<std::uint64_t>(is);
  h.step = detail::read_pod<std::uint64_t>(is);
  const auto meta_len = detail::read_pod<std::uint32_t>(is);
  h.meta.resize(meta_len);
  is.read(h.meta.data(), meta_len);
  return h;
}

/// Loads tensors into an existing ParamSet whose names and shapes must match.
template <typename T>
CheckpointHeader load_checkpoint(const std::filesystem::path& path, ParamSet<T>& params) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path.string());
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kCheckpointMagic, 8) != 0) throw std::runtime_error("not a checkpoint: " + path.string());
  if (detail::read_pod<std::uint32_t>(is) != kCheckpointVersion) throw std::runtime_error("unsupported checkpoint version");
  const auto dtype = detail::read_pod<std::uint32_t>(is);
  if (dtype != 4 && dtype != 8) throw std::runtime_error("checkpoint: unknown dtype");
  CheckpointHeader h;
  h.config_hash = detail::read_pod<std::uint64_t>(is);
  h.step = detail::read_pod<std::uint64_t>(is);
  const auto meta_len = detail::read_pod<std::uint32_t>(is);
  h.meta.resize(meta_len);
  is.read(h.meta.data(), meta_len);
  const auto count = detail::read_pod<std::uint32_t>(is);
  if (count != params.size()) throw std::runtime_error("checkpoint: tensor count mismatch");
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = detail::read_pod<std::uint32_t>(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const auto rows = detail::read_pod<std::uint32_t>(is);
    const auto cols = detail::read_pod<std::uint32_t>(is);
    Parameter<T>& p = params.at(name);
    if (p.value.rows() != rows || p.value.cols() != cols) throw std::runtime_error("checkpoint: shape mismatch for " + name);
    const std::size_t n = static_cast<std::size_t>(rows) * cols;
    if (dtype == sizeof(T)) {
      is.read(reinterpret_cast<char*>(p.value.data()), static_cast<std::streamsize>(n * sizeof(T)));
    } else if (dtype == 4) {
      std::vector<float> buf(n);
      is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n * 4));
      for (std::size_t k = 0; k < n; ++k) p.value.data()[k] = static_cast<T>(buf[k]);
    } else {
      std::vector<double> buf(n);
      is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n * 8));
      for (std::size_t k = 0; k < n; ++k) p.value.data()[k] = static_cast<T>(buf[k]);
    }
    if (!is) throw std::runtime_error("checkpoint: truncated tensor " + name);
  }
  return h;
}

}  // namespace ecft

#endif  // ECFT_PARAMS_HPP
