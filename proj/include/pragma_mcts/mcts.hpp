#pragma once

// Monte Carlo tree search over the pragma space, customized for autotuning:
//
//  * rewards come from the moving-average target (reward.hpp);
//  * each phase first learns its terminal depth from random walks;
//  * a phase restarts with a fresh tree once the search converges, and the
//    best and worst configurations seen so far are replayed into the new tree.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "pragma_mcts/error.hpp"
#include "pragma_mcts/reward.hpp"
#include "pragma_mcts/rng.hpp"
#include "pragma_mcts/session.hpp"
#include "pragma_mcts/space.hpp"

namespace pmcts {

struct MctsParams {
  double c = 0.1;
  std::size_t per_run_budget = 300;
  std::size_t n_walks = 10;
  std::size_t no_improve_limit = 50;
  std::size_t same_config_limit = 10;
  // Iterations (including cache hits) after which a phase ends even without
  // convergence; in a small space every iteration can end up a cache hit.
  std::size_t max_phase_iterations = 3000;
  // The run stops after this many consecutive phases without a new evaluation.
  std::size_t max_idle_phases = 100;
  // Verify node statistics after every iteration.
  bool check_invariants = false;
  RewardParams reward;
  SpaceParams space;
};

struct SearchNode {
  SpaceNode space;
  std::size_t child_count = 0;
  std::size_t visits = 0;
  double total_reward = 0;
  // Backpropagations whose path ended at this node.
  std::size_t terminal_visits = 0;
  std::map<std::size_t, std::unique_ptr<SearchNode>> children;

  SearchNode(SpaceNode node, const SpaceParams& params)
      : space(std::move(node)), child_count(pmcts::child_count(space, params)) {}

  std::optional<double> mean_reward() const {
    if (visits == 0) return std::nullopt;
    return total_reward / static_cast<double>(visits);
  }

  bool fully_expanded() const { return children.size() >= child_count; }
  std::size_t depth() const { return space.depth(); }

  SearchNode* find_child(std::size_t index) const {
    auto it = children.find(index);
    return it == children.end() ? nullptr : it->second.get();
  }

  SearchNode& materialize(std::size_t index, const SpaceParams& params) {
    auto& slot = children[index];
    if (!slot) slot = std::make_unique<SearchNode>(child(space, index, params), params);
    return *slot;
  }
};

// Exploration-weighted UCT; unvisited children score +infinity.
inline double uct_score(const SearchNode& child, std::size_t parent_visits, double c) {
  if (child.visits == 0) return std::numeric_limits<double>::infinity();
  const double n = static_cast<double>(child.visits);
  const double mean = child.total_reward / n;
  if (c == 0) return mean;
  return mean + 2 * c * std::sqrt(2 * std::log(static_cast<double>(std::max<std::size_t>(parent_visits, 1))) / n);
}

// Descends by UCT from root. Stops at target_depth, at a node with an
// unexpanded child, or at a node without children. Ties go to the lower index.
inline std::vector<SearchNode*> select(SearchNode& root, std::size_t target_depth, double c) {
  std::vector<SearchNode*> path{&root};
  SearchNode* node = &root;
  while (node->depth() < target_depth && node->child_count > 0 && node->fully_expanded()) {
    SearchNode* best = nullptr;
    double best_score = -std::numeric_limits<double>::infinity();
    for (auto& [index, ch] : node->children) {
      const double s = uct_score(*ch, node->visits, c);
      if (!best || s > best_score) {
        best = ch.get();
        best_score = s;
      }
    }
    node = best;
    path.push_back(node);
  }
  return path;
}

// Instantiates one unexpanded child of leaf, chosen uniformly.
inline SearchNode& expand(SearchNode& leaf, const SpaceParams& params, Rng& rng) {
  if (leaf.fully_expanded()) throw Error("expand: node has no unexpanded child");
  std::size_t pick = static_cast<std::size_t>(rng.uniform_index(leaf.child_count - leaf.children.size()));
  // Map the pick-th missing index onto the full index range.
  for (const auto& [index, ch] : leaf.children) {
    if (index <= pick) {
      ++pick;
    } else {
      break;
    }
  }
  return leaf.materialize(pick, params);
}

// Adds one visit and reward r to every node on the root-first path.
inline void backpropagate(const std::vector<SearchNode*>& path, double r) {
  for (SearchNode* n : path) {
    ++n->visits;
    n->total_reward += r;
  }
  if (!path.empty()) ++path.back()->terminal_visits;
}

// Creates (or reuses) the tree nodes along config's steps. nullopt when a step
// is not a child in this space.
inline std::optional<std::vector<SearchNode*>> materialize_path(SearchNode& root, const Configuration& config,
                                                                const SpaceParams& params) {
  std::vector<SearchNode*> path{&root};
  SearchNode* node = &root;
  for (const auto& step : config.steps) {
    const auto index = child_index(node->space, step, params);
    if (!index) return std::nullopt;
    node = &node->materialize(*index, params);
    path.push_back(node);
  }
  return path;
}

// Throws std::logic_error unless every node satisfies
//   visits == sum(child visits) + terminal_visits.
inline void check_node_statistics(const SearchNode& node) {
  std::size_t sum = 0;
  for (const auto& [index, ch] : node.children) {
    check_node_statistics(*ch);
    sum += ch->visits;
  }
  if (node.visits != sum + node.terminal_visits)
    throw std::logic_error("node statistics out of balance at '" + canonical_key(node.space.config) + "'");
}

// ---------------------------------------------------------------------------
// Convergence

class ConvergenceTracker {
 public:
  ConvergenceTracker(std::size_t no_improve_limit, std::size_t same_config_limit, double best_h = 1.0)
      : no_improve_limit_(no_improve_limit), same_config_limit_(same_config_limit), best_h_(best_h) {}

  // `produced` is false for cache hits; they only advance the same-configuration run.
  void observe(const std::string& key, std::optional<double> h, bool produced) {
    if (produced) {
      if (h && *h > best_h_) {
        best_h_ = *h;
        no_improve_ = 0;
      } else {
        ++no_improve_;
      }
    }
    if (last_key_ && *last_key_ == key) {
      ++same_run_;
    } else {
      last_key_ = key;
      same_run_ = 1;
    }
  }

  bool converged() const { return no_improve_ >= no_improve_limit_ || same_run_ >= same_config_limit_; }
  std::size_t no_improve() const { return no_improve_; }
  std::size_t same_run() const { return same_run_; }

 private:
  std::size_t no_improve_limit_;
  std::size_t same_config_limit_;
  double best_h_;
  std::size_t no_improve_ = 0;
  std::size_t same_run_ = 0;
  std::optional<std::string> last_key_;
};

struct IterationEntry {
  std::string key;
  std::optional<double> h;
  bool produced = true;
};

inline bool detect_convergence(const std::vector<IterationEntry>& recent, const MctsParams& params,
                               double best_h = 1.0) {
  ConvergenceTracker t(params.no_improve_limit, params.same_config_limit, best_h);
  for (const auto& e : recent) t.observe(e.key, e.h, e.produced);
  return t.converged();
}

// ---------------------------------------------------------------------------
// Phase components

// Reward bookkeeping for one phase.
struct PhaseState {
  int phase = 1;
  TargetState target;

  double score(const Evaluation& ev, const RewardParams& params) {
    if (ev.h) target = update_target(target, *ev.h, params);
    return reward(ev.outcome, ev.h, target.f, params);
  }
};

struct DepthResult {
  std::size_t d_star = 1;
  std::vector<const EvalRecord*> records;  // fresh walk evaluations
  std::size_t walks = 0;                   // walks evaluated, cached ones included
};

// Runs n_walks random walks of uniform random depth in [1, d_max] from root,
// evaluates and backpropagates each, and returns the depth of the best one.
inline DepthResult learn_depth(SearchNode& root, const MctsParams& params, SearchSession& session, Rng& rng,
                               PhaseState& state) {
  std::vector<SpaceNode> walks;
  for (std::size_t w = 0; w < params.n_walks; ++w) {
    const auto depth = static_cast<std::size_t>(rng.uniform_int(1, std::max(params.space.d_max, 1)));
    walks.push_back(random_walk(root.space, depth, params.space, rng));
  }
  std::vector<Configuration> configs;
  for (const auto& w : walks) configs.push_back(w.config);
  const auto results = session.evaluate_batch(configs);

  DepthResult out;
  std::optional<double> best_h;
  for (std::size_t w = 0; w < walks.size(); ++w) {
    if (!results[w]) break;
    const Evaluation& ev = *results[w];
    ++out.walks;
    const double r = state.score(ev, params.reward);
    if (auto path = materialize_path(root, walks[w].config, params.space)) backpropagate(*path, r);
    if (const EvalRecord* rec = session.commit(walks[w].config, ev, state.phase, "walk", state.target.f))
      out.records.push_back(rec);
    if (ev.h && (!best_h || *ev.h > *best_h)) {
      best_h = ev.h;
      out.d_star = std::max<std::size_t>(walks[w].depth(), 1);
    }
  }
  return out;
}

struct TransferStats {
  std::size_t reinforced = 0;
  std::size_t penalized = 0;
};

namespace detail {

template <typename T>
const EvalRecord& as_record(const T& x) {
  if constexpr (std::is_pointer_v<T>) {
    return *x;
  } else {
    return x;
  }
}

}  // namespace detail

// Replays history into root: +1 along the path of every upper-quantile record,
// r_penalty along every lower-quantile record that shares no pragma with the
// upper quantile. Never evaluates anything.
template <typename Range>
TransferStats apply_transfer(SearchNode& root, const Range& history, const MctsParams& params) {
  std::vector<EvalRecord> records;
  for (const auto& x : history) records.push_back(detail::as_record(x));
  TransferStats stats;
  if (std::none_of(records.begin(), records.end(), [](const EvalRecord& r) { return r.h.has_value(); }))
    return stats;
  const QuantileSplit split = quantile_split(records, params.reward.alpha);
  for (const EvalRecord* r : split.upper) {
    if (auto path = materialize_path(root, r->config, params.space)) {
      backpropagate(*path, 1.0);
      ++stats.reinforced;
    }
  }
  for (const EvalRecord* r : penalty_filter(split.lower, split.upper)) {
    if (auto path = materialize_path(root, r->config, params.space)) {
      backpropagate(*path, params.reward.r_penalty);
      ++stats.penalized;
    }
  }
  return stats;
}

// ---------------------------------------------------------------------------
// Driver

struct PhaseSummary {
  int phase = 0;
  std::size_t d_star = 0;
  std::size_t evaluations = 0;  // fresh evaluations, walks included
  std::size_t iterations = 0;   // tree iterations
  double best_h = 1.0;          // best speedup found within the phase
  bool converged = false;
  TransferStats transfer;
};

struct MctsResult {
  std::vector<PhaseSummary> phases;
};

// Restarting MCTS until the session budget is exhausted. Each phase: random
// walks fix the terminal depth, history from earlier phases is transferred,
// then select / expand / walk-to-depth / evaluate / backpropagate repeats until
// convergence or the per-run budget.
inline MctsResult run_mcts(const MctsParams& params, SearchSession& session, Rng& walk_rng, Rng& expand_rng) {
  session.evaluate_root();
  MctsResult result;
  const SpaceNode root_space = SpaceNode::root(session.root_nest());
  if (child_count(root_space, params.space) == 0) return result;

  std::size_t idle = 0;
  for (int phase = 1; !session.exhausted() && idle < params.max_idle_phases; ++phase) {
    const std::size_t unique_before = session.unique_count();
    SearchNode tree(root_space, params.space);
    PhaseState state{phase, TargetState{}};
    PhaseSummary summary;
    summary.phase = phase;

    std::vector<const EvalRecord*> earlier;
    for (const auto& r : session.history()) {
      if (r.phase >= 1 && r.phase < phase) earlier.push_back(&r);
    }

    const DepthResult depth = learn_depth(tree, params, session, walk_rng, state);
    summary.d_star = depth.d_star;
    for (const EvalRecord* r : depth.records) {
      if (r->h) summary.best_h = std::max(summary.best_h, *r->h);
    }
    summary.transfer = apply_transfer(tree, earlier, params);

    ConvergenceTracker tracker(params.no_improve_limit, params.same_config_limit, session.best_h());
    std::size_t phase_evals = depth.records.size();
    while (!session.exhausted() && phase_evals < params.per_run_budget &&
           summary.iterations < params.max_phase_iterations && !tracker.converged()) {
      std::vector<SearchNode*> path = select(tree, depth.d_star, params.c);
      SearchNode* leaf = path.back();
      if (leaf->depth() < depth.d_star && !leaf->fully_expanded()) path.push_back(&expand(*leaf, params.space, expand_rng));
      SpaceNode terminal = path.back()->space;
      if (terminal.depth() < depth.d_star)
        terminal = random_walk(terminal, depth.d_star - terminal.depth(), params.space, walk_rng);

      const auto ev = session.evaluate(terminal.config);
      if (!ev) break;
      ++summary.iterations;
      const double r = state.score(*ev, params.reward);
      backpropagate(path, r);
      if (session.commit(terminal.config, *ev, phase, "tree", state.target.f)) ++phase_evals;
      if (ev->h) summary.best_h = std::max(summary.best_h, *ev->h);
      tracker.observe(ev->key, ev->h, ev->fresh);
      if (params.check_invariants) check_node_statistics(tree);
    }
    summary.converged = tracker.converged();
    summary.evaluations = session.unique_count() - unique_before;
    idle = summary.evaluations == 0 ? idle + 1 : 0;
    result.phases.push_back(summary);
  }
  return result;
}

}  // namespace pmcts
