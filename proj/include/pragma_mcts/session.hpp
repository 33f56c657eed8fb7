#pragma once

// Budget accounting, caching, and the evaluation log shared by every search
// method, so their results are comparable evaluation for evaluation.

#include <algorithm>
#include <chrono>
#include <deque>
#include <functional>
#include <future>
#include <limits>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "pragma_mcts/error.hpp"
#include "pragma_mcts/eval.hpp"
#include "pragma_mcts/loop_model.hpp"
#include "pragma_mcts/record.hpp"
#include "pragma_mcts/reward.hpp"

namespace pmcts {

struct Budget {
  // Unique configurations evaluated after the root baseline.
  std::size_t max_unique = 1000;
  double max_wall_clock_s = 6 * 3600.0;
};

using RecordSink = std::function<void(const EvalRecord&)>;

struct Evaluation {
  std::string key;
  Outcome outcome;
  std::optional<double> h;
  bool fresh = false;  // consumed one unit of the unique budget
  // Unique-evaluation index and clock reading at measurement; set when fresh.
  std::size_t index = 0;
  double measured_at_s = 0;
};

class SearchSession {
 public:
  SearchSession(LoopNest root_nest, Evaluator& evaluator, Budget budget, std::string method, RecordSink sink = {},
                std::size_t jobs = 1)
      : root_nest_(std::move(root_nest)),
        cache_(evaluator),
        budget_(budget),
        method_(std::move(method)),
        sink_(std::move(sink)),
        jobs_(std::max<std::size_t>(jobs, 1)),
        start_(std::chrono::steady_clock::now()) {}

  SearchSession(const SearchSession&) = delete;
  SearchSession& operator=(const SearchSession&) = delete;

  const LoopNest& root_nest() const { return root_nest_; }
  const std::string& method() const { return method_; }
  const CachedEvaluator& cache() const { return cache_; }

  // Measures the unmodified program. Every speedup is relative to this time.
  const EvalRecord& evaluate_root() {
    if (root_time_) return history_.front();
    auto result = cache_.evaluate_tracked(Configuration{});
    advance_clock(result.outcome);
    const auto t = seconds_of(result.outcome);
    if (!t || !(*t > 0)) throw Error("root configuration could not be measured; no baseline time");
    root_time_ = *t;
    EvalRecord r = make_record(Configuration{}, Evaluation{"", result.outcome, 1.0, true, 0, elapsed()}, 0, "root", std::nullopt);
    r.best_so_far_h = 1.0;
    best_h_ = 1.0;
    return append(std::move(r));
  }

  bool has_root() const { return root_time_.has_value(); }
  double root_time() const {
    if (!root_time_) throw Error("root not evaluated");
    return *root_time_;
  }

  std::size_t unique_count() const { return unique_; }
  std::size_t remaining() const { return budget_.max_unique > unique_ ? budget_.max_unique - unique_ : 0; }

  double elapsed() const {
    if (simulated_) return simulated_elapsed_;
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

  // True once no new configuration may be measured.
  bool exhausted() const { return remaining() == 0 || elapsed() >= budget_.max_wall_clock_s; }

  // Cached configurations can always be looked up; new ones need budget.
  bool can_evaluate(const Configuration& config) const {
    return cache_.contains(canonical_key(config)) || !exhausted();
  }

  std::optional<Evaluation> evaluate(const Configuration& config) {
    if (!can_evaluate(config)) return std::nullopt;
    auto result = cache_.evaluate_tracked(config);
    if (result.fresh) {
      ++unique_;
      advance_clock(result.outcome);
    }
    return to_evaluation(canonical_key(config), std::move(result));
  }

  // Evaluates in order until the budget runs out; entries past that point are
  // nullopt. With jobs > 1 the new configurations are measured concurrently and
  // the results are accounted in submission order.
  std::vector<std::optional<Evaluation>> evaluate_batch(const std::vector<Configuration>& configs) {
    std::vector<std::optional<Evaluation>> out(configs.size());
    if (jobs_ == 1) {
      for (std::size_t i = 0; i < configs.size(); ++i) {
        out[i] = evaluate(configs[i]);
        if (!out[i]) break;
      }
      return out;
    }
    // Select the prefix the budget allows, counting each new key once.
    std::vector<std::string> keys;
    std::unordered_map<std::string, std::size_t> first_miss;
    std::size_t allowed = exhausted() ? 0 : remaining();
    std::size_t cut = configs.size();
    for (std::size_t i = 0; i < configs.size(); ++i) {
      keys.push_back(canonical_key(configs[i]));
      if (cache_.contains(keys[i]) || first_miss.count(keys[i])) continue;
      if (allowed == 0) {
        cut = i;
        break;
      }
      --allowed;
      first_miss.emplace(keys[i], i);
    }
    std::unordered_map<std::string, CachedEvaluator::Result> measured;
    std::vector<std::pair<std::size_t, std::future<CachedEvaluator::Result>>> running;
    std::vector<std::size_t> order;
    for (auto& [key, idx] : first_miss) order.push_back(idx);
    std::sort(order.begin(), order.end());
    for (std::size_t next = 0; next < order.size() || !running.empty();) {
      while (next < order.size() && running.size() < jobs_) {
        const std::size_t idx = order[next++];
        running.emplace_back(idx, std::async(std::launch::async, [this, &configs, idx] {
                               return cache_.evaluate_tracked(configs[idx]);
                             }));
      }
      auto& [idx, fut] = running.front();
      measured.emplace(keys[idx], fut.get());
      running.erase(running.begin());
    }
    for (std::size_t i = 0; i < cut; ++i) {
      auto it = measured.find(keys[i]);
      if (it != measured.end() && first_miss.at(keys[i]) == i) {
        if (it->second.fresh) {
          ++unique_;
          advance_clock(it->second.outcome);
        }
        out[i] = to_evaluation(keys[i], it->second);
      } else {
        out[i] = to_evaluation(keys[i], {*cache_.lookup(keys[i]), false});
      }
    }
    return out;
  }

  // Logs a fresh evaluation; cache hits are not evaluator-producing and are skipped.
  const EvalRecord* commit(const Configuration& config, const Evaluation& ev, int phase, std::string stage,
                           std::optional<double> target_f = std::nullopt) {
    if (!ev.fresh) return nullptr;
    if (ev.h) best_h_ = std::max(best_h_, *ev.h);
    EvalRecord r = make_record(config, ev, phase, std::move(stage), target_f);
    return &append(std::move(r));
  }

  const std::deque<EvalRecord>& history() const { return history_; }
  double best_h() const { return best_h_; }

  // Highest-speedup record; the earliest wins ties.
  const EvalRecord& best() const {
    if (history_.empty()) throw Error("no evaluations");
    const EvalRecord* best = &history_.front();
    for (const auto& r : history_) {
      if (r.h && (!best->h || *r.h > *best->h)) best = &r;
    }
    return *best;
  }

 private:
  // Call right after accounting a fresh result so it carries its own index and time.
  Evaluation to_evaluation(std::string key, CachedEvaluator::Result result) const {
    Evaluation ev{std::move(key), std::move(result.outcome), std::nullopt, result.fresh};
    if (const auto t = seconds_of(ev.outcome)) ev.h = speedup(root_time(), *t);
    if (ev.fresh) {
      ev.index = unique_;
      ev.measured_at_s = elapsed();
    }
    return ev;
  }

  void advance_clock(const Outcome& o) {
    if (auto cost = cache_.simulated_cost(o)) {
      simulated_ = true;
      simulated_elapsed_ += *cost;
    }
  }

  EvalRecord make_record(const Configuration& config, const Evaluation& ev, int phase, std::string stage,
                         std::optional<double> target_f) const {
    EvalRecord r;
    r.iteration = ev.index;
    r.phase = phase;
    r.method = method_;
    r.stage = std::move(stage);
    r.config = config;
    r.key = canonical_key(config);
    r.pragmas = pragma_list(root_nest_, config);
    r.outcome = ev.outcome;
    r.h = ev.h;
    r.best_so_far_h = best_h_;
    r.target_f = target_f;
    r.wall_clock_s = ev.measured_at_s;
    return r;
  }

  const EvalRecord& append(EvalRecord r) {
    history_.push_back(std::move(r));
    if (sink_) sink_(history_.back());
    return history_.back();
  }

  LoopNest root_nest_;
  CachedEvaluator cache_;
  Budget budget_;
  std::string method_;
  RecordSink sink_;
  std::size_t jobs_;
  std::chrono::steady_clock::time_point start_;
  std::optional<double> root_time_;
  std::size_t unique_ = 0;
  bool simulated_ = false;
  double simulated_elapsed_ = 0;
  double best_h_ = 1.0;
  std::deque<EvalRecord> history_;
};

}  // namespace pmcts
