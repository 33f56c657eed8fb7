#pragma once

// Comparison searchers: random search, breadth-first, global greedy. They share
// SearchSession with MCTS, so budgets and caching are identical.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <queue>
#include <vector>

#include "pragma_mcts/rng.hpp"
#include "pragma_mcts/session.hpp"
#include "pragma_mcts/space.hpp"

namespace pmcts {

struct RandomSearchParams {
  SpaceParams space;
  // Stop after this many consecutive samples that hit the cache, which only
  // happens once the reachable space is (nearly) exhausted.
  std::size_t max_consecutive_repeats = 10000;
};

// Each sample: depth uniform in [1, d_max], random walk from the root, evaluate.
inline const std::deque<EvalRecord>& random_search(SearchSession& session, const RandomSearchParams& params,
                                                   Rng& rng) {
  session.evaluate_root();
  const SpaceNode root = SpaceNode::root(session.root_nest());
  if (child_count(root, params.space) == 0) return session.history();
  std::size_t repeats = 0;
  while (!session.exhausted() && repeats < params.max_consecutive_repeats) {
    const auto depth = static_cast<std::size_t>(rng.uniform_int(1, std::max(params.space.d_max, 1)));
    const SpaceNode node = random_walk(root, depth, params.space, rng);
    const auto ev = session.evaluate(node.config);
    if (!ev) break;
    if (session.commit(node.config, *ev, 0, "rs")) {
      repeats = 0;
    } else {
      ++repeats;
    }
  }
  return session.history();
}

// Level by level in child-index order. Failed configurations still have their
// children visited.
inline const std::deque<EvalRecord>& breadth_first(SearchSession& session, const SpaceParams& params) {
  session.evaluate_root();
  std::deque<SpaceNode> frontier{SpaceNode::root(session.root_nest())};
  while (!frontier.empty() && !session.exhausted()) {
    const SpaceNode node = std::move(frontier.front());
    frontier.pop_front();
    if (static_cast<int>(node.depth()) >= params.d_max) continue;
    const std::size_t n = child_count(node, params);
    for (std::size_t i = 0; i < n; ++i) {
      SpaceNode c = child(node, i, params);
      const auto ev = session.evaluate(c.config);
      if (!ev) return session.history();
      session.commit(c.config, *ev, 0, "bf");
      frontier.push_back(std::move(c));
    }
  }
  return session.history();
}

struct GreedyQueueEntry {
  SpaceNode node;
  double h = 0;
  std::uint64_t order = 0;  // insertion sequence
};

struct GreedyOrder {
  bool operator()(const GreedyQueueEntry& a, const GreedyQueueEntry& b) const {
    if (a.h != b.h) return a.h < b.h;
    return a.order > b.order;
  }
};

// Pops the highest-speedup node, evaluates all its children and queues the
// successful ones. Starts from the root.
inline const std::deque<EvalRecord>& global_greedy(SearchSession& session, const SpaceParams& params) {
  session.evaluate_root();
  std::priority_queue<GreedyQueueEntry, std::vector<GreedyQueueEntry>, GreedyOrder> queue;
  std::uint64_t order = 0;
  queue.push({SpaceNode::root(session.root_nest()), 1.0, order++});
  while (!queue.empty() && !session.exhausted()) {
    const GreedyQueueEntry top = queue.top();
    queue.pop();
    if (static_cast<int>(top.node.depth()) >= params.d_max) continue;
    const std::size_t n = child_count(top.node, params);
    for (std::size_t i = 0; i < n; ++i) {
      SpaceNode c = child(top.node, i, params);
      const auto ev = session.evaluate(c.config);
      if (!ev) return session.history();
      session.commit(c.config, *ev, 0, "gg");
      if (ev->h) queue.push({std::move(c), *ev->h, order++});
    }
  }
  return session.history();
}

}  // namespace pmcts
