#pragma once

// Adaptive pattern proportions: every `period` steps the per-pattern losses
// are probed and the proportions replaced by their softmax, so patterns with
// high loss are sampled more often.

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "missbench/core.hpp"
#include "missbench/missingness.hpp"

namespace missbench {

/// exp(l_i / t) / sum_j exp(l_j / t), evaluated with max subtraction.
inline std::vector<double> softmax_proportions(std::span<const double> losses, double temperature) {
  if (losses.empty()) throw InvalidArgument("softmax_proportions: empty loss vector");
  if (!(temperature > 0.0)) throw InvalidArgument("softmax_proportions: temperature must be > 0");
  for (double l : losses)
    if (!std::isfinite(l)) throw InvalidArgument("softmax_proportions: losses must be finite");
  const double top = *std::max_element(losses.begin(), losses.end());
  std::vector<double> out(losses.size());
  double total = 0.0;
  for (std::size_t k = 0; k < losses.size(); ++k) {
    out[k] = std::exp((losses[k] - top) / temperature);
    total += out[k];
  }
  for (double& v : out) v /= total;
  return out;
}

struct ProportionState {
  std::vector<Pattern> patterns;
  std::vector<double> proportions;
  Index steps = 0;
  Index period = 50;
  double temperature = 1.0;

  static ProportionState uniform(std::vector<Pattern> patterns, Index period = 50,
                                 double temperature = 1.0) {
    if (patterns.empty()) throw InvalidArgument("ProportionState: no patterns");
    if (period < 1) throw InvalidArgument("ProportionState: period must be >= 1");
    if (!(temperature > 0.0)) throw InvalidArgument("ProportionState: temperature must be > 0");
    const double p = 1.0 / static_cast<double>(patterns.size());
    ProportionState s;
    s.proportions.assign(patterns.size(), p);
    s.patterns = std::move(patterns);
    s.period = period;
    s.temperature = temperature;
    return s;
  }

  [[nodiscard]] bool refreshes_at(Index step) const { return step % period == 0; }
};

using LossProbe = std::function<double(Pattern)>;

/// Advances one step; on every period-th step the probe is called once per
/// pattern (in state order) and the proportions recomputed.
inline ProportionState step(const ProportionState& state, const LossProbe& probe) {
  ProportionState next = state;
  next.steps += 1;
  if (next.refreshes_at(next.steps)) {
    std::vector<double> losses;
    losses.reserve(state.patterns.size());
    for (Pattern p : state.patterns) losses.push_back(probe(p));
    next.proportions = softmax_proportions(losses, state.temperature);
  }
  return next;
}

}  // namespace missbench
