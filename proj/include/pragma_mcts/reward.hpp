#pragma once

// Speedup, the moving-average target, the three-branch reward, and the
// quantile split used when a restart transfers history into a fresh tree.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "pragma_mcts/error.hpp"
#include "pragma_mcts/record.hpp"

namespace pmcts {

enum class TargetRule {
  // f = max(previous f, mean of the window); never decreases.
  kRunningMax,
  // f = mean of the window alone; may decrease.
  kMovingAverage,
};

struct RewardParams {
  std::size_t m = 10;  // moving-average window
  double r_penalty = -1.0;
  double alpha = 0.05;
  TargetRule rule = TargetRule::kRunningMax;
};

struct TargetState {
  double f = 1.0;  // the root's speedup over itself
  std::deque<double> recent_h;
};

inline double speedup(double root_time, double config_time) {
  if (!(root_time > 0) || !(config_time > 0)) throw DomainError("speedup needs positive times");
  return root_time / config_time;
}

// Pushes a successful speedup into the window and recomputes the target.
// The mean is over the values present while the window is still filling.
inline TargetState update_target(TargetState state, double h, const RewardParams& params) {
  const double previous = state.f;
  state.recent_h.push_back(h);
  while (state.recent_h.size() > std::max<std::size_t>(params.m, 1)) state.recent_h.pop_front();
  const double mean =
      std::accumulate(state.recent_h.begin(), state.recent_h.end(), 0.0) / static_cast<double>(state.recent_h.size());
  switch (params.rule) {
    case TargetRule::kRunningMax:
      state.f = std::max(previous, mean);
      break;
    case TargetRule::kMovingAverage:
      state.f = mean;
      break;
  }
  return state;
}

// r_penalty for a failed variant, 1 when the speedup beats the target, else 0.
inline double reward(const Outcome& outcome, std::optional<double> h, double f, const RewardParams& params) {
  if (!succeeded(outcome) || !h) return params.r_penalty;
  return *h > f ? 1.0 : 0.0;
}

namespace detail {

// Number of values in a tail holding `fraction` of n by nearest rank, at least one.
inline std::size_t tail_size(std::size_t n, double fraction) {
  // The epsilon keeps products such as 0.05 * 20 from rounding up past an integer.
  const double raw = std::ceil(fraction * static_cast<double>(n) - 1e-9);
  return std::clamp<std::size_t>(raw < 1 ? 1 : static_cast<std::size_t>(raw), 1, n);
}

}  // namespace detail

// Nearest-rank value below which `fraction` of the values lie.
inline double lower_quantile(std::vector<double> values, double fraction) {
  if (values.empty()) throw DomainError("quantile of an empty set");
  std::sort(values.begin(), values.end());
  return values[detail::tail_size(values.size(), fraction) - 1];
}

// Mirror of lower_quantile: the value at or above which the top `fraction` of values lie.
inline double upper_quantile(std::vector<double> values, double fraction) {
  if (values.empty()) throw DomainError("quantile of an empty set");
  std::sort(values.begin(), values.end());
  return values[values.size() - detail::tail_size(values.size(), fraction)];
}

struct QuantileSplit {
  std::vector<const EvalRecord*> lower;
  std::vector<const EvalRecord*> upper;
};

// lower = {h <= Q(alpha)} plus every failed record; upper = {h >= Q(1 - alpha)}.
template <typename Range>
QuantileSplit quantile_split(const Range& history, double alpha) {
  std::vector<double> hs;
  for (const EvalRecord& r : history) {
    if (r.h) hs.push_back(*r.h);
  }
  if (hs.empty()) throw DomainError("quantile split needs at least one successful record");
  const double lo = lower_quantile(hs, alpha);
  const double hi = upper_quantile(hs, alpha);
  QuantileSplit split;
  for (const EvalRecord& r : history) {
    if (!r.h || *r.h <= lo) split.lower.push_back(&r);
    if (r.h && *r.h >= hi) split.upper.push_back(&r);
  }
  return split;
}

// Lower records that share no pragma (kind + parameters) with any upper record.
inline std::vector<const EvalRecord*> penalty_filter(const std::vector<const EvalRecord*>& lower,
                                                     const std::vector<const EvalRecord*>& upper) {
  std::set<std::string> good;
  for (const EvalRecord* r : upper) {
    for (const auto& step : r->config.steps) good.insert(pragma_signature(step));
  }
  std::vector<const EvalRecord*> out;
  for (const EvalRecord* r : lower) {
    const bool shares = std::any_of(r->config.steps.begin(), r->config.steps.end(),
                                    [&](const Transformation& t) { return good.count(pragma_signature(t)) > 0; });
    if (!shares) out.push_back(r);
  }
  return out;
}

}  // namespace pmcts
