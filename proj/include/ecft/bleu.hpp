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

#ifndef ECFT_BLEU_HPP
#define ECFT_BLEU_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <stdexcept>
#include <vector>

#include "ecft/vocab.hpp"

namespace ecft {

/// Sufficient statistics of corpus BLEU-4.
struct BleuStats {
  std::array<long long, 4> matches{};
  std::array<long long, 4> totals{};
  long long hyp_len = 0;
  long long ref_len = 0;

  BleuStats& operator+=(const BleuStats& o) {
    for (int n = 0; n < 4; ++n) {
      matches[n] += o.matches[n];
      totals[n] += o.totals[n];
    }
    hyp_len += o.hyp_len;
    ref_len += o.ref_len;
    return *this;
  }
};

inline BleuStats sentence_stats(const Sentence& hyp, const Sentence& ref) {
  BleuStats st;
  st.hyp_len = static_cast<long long>(hyp.size());
  st.ref_len = static_cast<long long>(ref.size());
  for (int n = 1; n <= 4; ++n) {
    std::map<std::vector<Token>, long long> ref_counts;
    for (std::size_t i = 0; i + n <= ref.size(); ++i) ++ref_counts[std::vector<Token>(ref.begin() + i, ref.begin() + i + n)];
    std::map<std::vector<Token>, long long> hyp_counts;
    for (std::size_t i = 0; i + n <= hyp.size(); ++i) ++hyp_counts[std::vector<Token>(hyp.begin() + i, hyp.begin() + i + n)];
    long long m = 0;
    for (const auto& [gram, c] : hyp_counts) {
      auto it = ref_counts.find(gram);
      if (it != ref_counts.end()) m += std::min(c, it->second);
    }
    st.matches[n - 1] = m;
    st.totals[n - 1] = std::max<long long>(0, static_cast<long long>(hyp.size()) - n + 1);
  }
  return st;
}

/// BLEU in [0, 100] from accumulated statistics: unigram precision is
/// unsmoothed, n >= 2 precisions use add-one smoothing, standard brevity
/// penalty.
inline double bleu_from_stats(const BleuStats& st) {
  if (st.hyp_len == 0 || st.matches[0] == 0) return 0.0;
  double log_sum = std::log(static_cast<double>(st.matches[0]) / static_cast<double>(st.totals[0]));
  for (int n = 1; n < 4; ++n)
    log_sum += std::log(static_cast<double>(st.matches[n] + 1) / static_cast<double>(st.totals[n] + 1));
  const double bp =
      st.hyp_len > st.ref_len ? 1.0 : std::exp(1.0 - static_cast<double>(st.ref_len) / static_cast<double>(st.hyp_len));
  return 100.0 * bp * std::exp(log_sum / 4.0);
}

/// Corpus-level BLEU-4 over token ids, single reference per hypothesis.
inline double corpus_bleu(const std::vector<Sentence>& hypotheses, const std::vector<Sentence>& references) {
  if (hypotheses.empty()) throw std::invalid_argument("corpus_bleu: empty corpus");
  if (hypotheses.size() != references.size()) throw std::invalid_argument("corpus_bleu: size mismatch");
  BleuStats st;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) st += sentence_stats(hypotheses[i], references[i]);
  return bleu_from_stats(st);
}

}  // namespace ecft

#endif  // ECFT_BLEU_HPP
