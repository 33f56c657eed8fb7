#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "pragma_mcts/loop_model.hpp"

namespace pmcts {

struct Time {
  double seconds = 0;
  friend bool operator==(const Time&, const Time&) = default;
};

// The compiler rejected the transformation sequence.
struct CompileFailure {
  std::string reason;
  friend bool operator==(const CompileFailure&, const CompileFailure&) = default;
};

// The variant compiled but crashed, timed out, or printed no time.
struct RunFailure {
  std::string reason;
  friend bool operator==(const RunFailure&, const RunFailure&) = default;
};

using Outcome = std::variant<Time, CompileFailure, RunFailure>;

inline bool succeeded(const Outcome& o) { return std::holds_alternative<Time>(o); }

inline std::optional<double> seconds_of(const Outcome& o) {
  if (const auto* t = std::get_if<Time>(&o)) return t->seconds;
  return std::nullopt;
}

inline std::string_view outcome_kind(const Outcome& o) {
  switch (o.index()) {
    case 0: return "time";
    case 1: return "compile_failure";
    default: return "run_failure";
  }
}

// One evaluator-producing iteration of a search.
struct EvalRecord {
  std::size_t iteration = 0;  // unique-evaluation index; the root is 0
  int phase = 0;              // restart count; 0 for the root and the baselines' single phase
  std::string method;
  std::string stage;  // root | walk | tree | rs | bf | gg
  Configuration config;
  std::string key;
  std::vector<std::string> pragmas;
  Outcome outcome;
  std::optional<double> h;  // present iff outcome is a Time
  double best_so_far_h = 1.0;
  std::optional<double> target_f;
  double wall_clock_s = 0;

  std::size_t depth() const { return config.depth(); }
};

}  // namespace pmcts
