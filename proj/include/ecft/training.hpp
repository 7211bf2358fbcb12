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

#ifndef ECFT_TRAINING_HPP
#define ECFT_TRAINING_HPP

#include <algorithm>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "ecft/synth_world.hpp"

namespace ecft {

enum class ScheduleShape {
  kWarmupLinearDecay,  // linear ramp to peak over warmup steps, then linear decay to 0
  kLinearDecay,        // peak at step 0, linear decay to 0 at the final step
  kConstant,
};

struct LrSchedule {
  ScheduleShape shape = ScheduleShape::kLinearDecay;
  double peak = 1e-4;
  int warmup_steps = 0;
  int total_steps = 1;

  /// Learning rate for a 0-based step. Decaying shapes reach exactly 0 at
  /// the final step (total_steps - 1); a one-step stage runs at the peak.
  double at(int step) const {
    if (step < 0) throw std::invalid_argument("negative step");
    if (shape == ScheduleShape::kConstant) return peak;
    const int last = total_steps - 1;
    if (last <= 0) return step == 0 ? peak : 0.0;
    if (step >= last) return 0.0;
    if (shape == ScheduleShape::kWarmupLinearDecay && step < warmup_steps)
      return peak * static_cast<double>(step) / static_cast<double>(warmup_steps);
    const int from = shape == ScheduleShape::kWarmupLinearDecay ? warmup_steps : 0;
    return peak * (1.0 - static_cast<double>(step - from) / static_cast<double>(last - from));
  }
};

inline std::string to_string(ScheduleShape s) {
  switch (s) {
    case ScheduleShape::kWarmupLinearDecay: return "warmup_linear_decay";
    case ScheduleShape::kLinearDecay: return "linear_decay";
    case ScheduleShape::kConstant: return "constant";
  }
  return "constant";
}

/// Draws `n` sentences uniformly with replacement.
inline std::vector<Sentence> sample_batch(const std::vector<Sentence>& pool, int n, std::mt19937_64& rng) {
  if (pool.empty()) throw std::invalid_argument("sample_batch: empty corpus");
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  std::vector<Sentence> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out.push_back(pool[pick(rng)]);
  return out;
}

}  // namespace ecft

#endif  // ECFT_TRAINING_HPP
