#include <gtest/gtest.h>

#include <random>

#include "test_support.hpp"

using namespace pmcts;

namespace {

EvalRecord success(std::string key_tag, double h, std::vector<Transformation> steps = {}) {
  EvalRecord r;
  r.config.steps = std::move(steps);
  r.key = key_tag;
  r.outcome = Time{1.0 / h};
  r.h = h;
  return r;
}

EvalRecord failure(std::vector<Transformation> steps) {
  EvalRecord r;
  r.config.steps = std::move(steps);
  r.key = canonical_key(r.config);
  r.outcome = CompileFailure{"rejected"};
  return r;
}

// Nearest rank by counting, in integer percent: the smallest value with at
// least pct% of the values at or below it, and the mirror for the top.
double lower_by_count(const std::vector<double>& v, int pct) {
  double best = 0;
  bool found = false;
  for (double x : v) {
    std::size_t at_or_below = 0;
    for (double y : v) at_or_below += y <= x;
    if (at_or_below * 100 >= static_cast<std::size_t>(pct) * v.size() && (!found || x < best)) {
      best = x;
      found = true;
    }
  }
  return best;
}

double upper_by_count(const std::vector<double>& v, int pct) {
  double best = 0;
  bool found = false;
  for (double x : v) {
    std::size_t at_or_above = 0;
    for (double y : v) at_or_above += y >= x;
    if (at_or_above * 100 >= static_cast<std::size_t>(pct) * v.size() && (!found || x > best)) {
      best = x;
      found = true;
    }
  }
  return best;
}

}  // namespace

TEST(Speedup, Examples) {
  EXPECT_DOUBLE_EQ(speedup(2.0, 1.0), 2.0);
  EXPECT_DOUBLE_EQ(speedup(0.37, 0.37), 1.0);
  // Quotient of two measured times, computed once by hand: 0.1897 / 0.0272.
  EXPECT_NEAR(speedup(0.1897, 0.0272), 6.974264705882353, 1e-12);
}

TEST(Speedup, NonPositiveTimes) {
  EXPECT_THROW(speedup(0.0, 1.0), DomainError);
  EXPECT_THROW(speedup(1.0, 0.0), DomainError);
  EXPECT_THROW(speedup(1.0, -2.0), DomainError);
}

TEST(UpdateTarget, MaxDominates) {
  RewardParams p;
  p.m = 2;
  TargetState s{1.5, {1.2}};
  s = update_target(s, 1.2, p);
  EXPECT_DOUBLE_EQ(s.f, 1.5);
}

TEST(UpdateTarget, FullWindowMean) {
  RewardParams p;
  p.m = 3;
  TargetState s;
  for (int i = 0; i < 3; ++i) s = update_target(s, 2.0, p);
  EXPECT_DOUBLE_EQ(s.f, 2.0);
  EXPECT_EQ(s.recent_h.size(), 3u);
}

TEST(UpdateTarget, FreshStateKeepsOne) {
  RewardParams p;
  p.m = 1;
  const auto s = update_target(TargetState{}, 0.5, p);
  EXPECT_DOUBLE_EQ(s.f, 1.0);
}

TEST(UpdateTarget, WindowSlides) {
  RewardParams p;
  p.m = 2;
  TargetState s;
  s = update_target(s, 3.0, p);  // mean 3
  s = update_target(s, 1.0, p);  // mean 2
  s = update_target(s, 5.0, p);  // mean 3
  EXPECT_DOUBLE_EQ(s.f, 3.0);
  EXPECT_EQ(s.recent_h, (std::deque<double>{1.0, 5.0}));
}

TEST(UpdateTarget, MovingAverageRuleMayDecrease) {
  RewardParams p;
  p.m = 1;
  p.rule = TargetRule::kMovingAverage;
  TargetState s;
  s = update_target(s, 3.0, p);
  s = update_target(s, 2.0, p);
  EXPECT_DOUBLE_EQ(s.f, 2.0);
}

TEST(Reward, BranchTable) {
  const RewardParams p;
  EXPECT_EQ(reward(CompileFailure{"x"}, std::nullopt, 1.0, p), -1.0);
  EXPECT_EQ(reward(RunFailure{"x"}, std::nullopt, 1.0, p), -1.0);
  EXPECT_EQ(reward(Time{0.5}, 2.0, 1.5, p), 1.0);
  EXPECT_EQ(reward(Time{0.5}, 1.5, 1.5, p), 0.0);
  EXPECT_EQ(reward(Time{0.5}, 1.0, 1.5, p), 0.0);
  RewardParams q;
  q.r_penalty = -0.25;
  EXPECT_EQ(reward(CompileFailure{"x"}, std::nullopt, 1.0, q), -0.25);
}

TEST(Quantiles, MatchCountingDefinition) {
  std::mt19937_64 gen(11);
  for (int trial = 0; trial < 300; ++trial) {
    std::uniform_int_distribution<int> n_dist(1, 60);
    std::uniform_int_distribution<int> v_dist(0, 30);
    std::vector<double> v(static_cast<std::size_t>(n_dist(gen)));
    for (auto& x : v) x = v_dist(gen) / 10.0;
    for (int pct : {5, 10, 25}) {
      EXPECT_EQ(lower_quantile(v, pct / 100.0), lower_by_count(v, pct));
      EXPECT_EQ(upper_quantile(v, pct / 100.0), upper_by_count(v, pct));
    }
  }
}

TEST(QuantileSplit, TwentyDistinctRecords) {
  std::vector<EvalRecord> history;
  for (int i = 0; i < 20; ++i) history.push_back(success("r" + std::to_string(i), 1.0 + 0.1 * i));
  const auto split = quantile_split(history, 0.05);
  ASSERT_EQ(split.lower.size(), 1u);
  ASSERT_EQ(split.upper.size(), 1u);
  EXPECT_EQ(split.lower[0]->key, "r0");
  EXPECT_EQ(split.upper[0]->key, "r19");
}

TEST(QuantileSplit, SingleRecordInBoth) {
  std::vector<EvalRecord> history{success("only", 1.3)};
  const auto split = quantile_split(history, 0.05);
  EXPECT_EQ(split.lower.size(), 1u);
  EXPECT_EQ(split.upper.size(), 1u);
}

TEST(QuantileSplit, FailuresAreLower) {
  std::vector<EvalRecord> history{success("a", 1.0), success("b", 2.0), failure({Reverse{"i"}})};
  const auto split = quantile_split(history, 0.05);
  EXPECT_EQ(split.lower.size(), 2u);
  EXPECT_EQ(split.upper.size(), 1u);
}

TEST(QuantileSplit, NeedsASuccess) {
  std::vector<EvalRecord> history{failure({Reverse{"i"}})};
  EXPECT_THROW(quantile_split(history, 0.05), DomainError);
  EXPECT_THROW(quantile_split(std::vector<EvalRecord>{}, 0.05), DomainError);
}

TEST(PenaltyFilter, SharedPragmaExempts) {
  const auto upper = success("u", 3.0, {ParallelizeThread{"i"}});
  const auto low_shared = success("a", 0.5, {ParallelizeThread{"j"}});
  const auto low_disjoint = success("b", 0.5, {Reverse{"i"}});
  const auto out = penalty_filter({&low_shared, &low_disjoint}, {&upper});
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0]->key, "b");
}

TEST(PenaltyFilter, DisjointFromTileAndParallelize) {
  const auto u1 = success("u1", 3.0, {Tile{"i", 32, false}});
  const auto u2 = success("u2", 3.0, {ParallelizeThread{"i"}});
  const auto low = success("low", 0.5, {Reverse{"i"}});
  EXPECT_EQ(penalty_filter({&low}, {&u1, &u2}).size(), 1u);
}

TEST(PenaltyFilter, ParametersMatter) {
  const auto u = success("u", 3.0, {Tile{"i", 32, false}});
  const auto other_size = success("a", 0.5, {Tile{"i", 64, false}});
  const auto same_size_other_loop = success("b", 0.5, {Tile{"i.floor", 32, false}});
  const auto out = penalty_filter({&other_size, &same_size_other_loop}, {&u});
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0]->key, "a");
}

TEST(PenaltyFilter, EmptyUpperPenalizesAll) {
  const auto a = success("a", 0.5, {Reverse{"i"}});
  const auto b = failure({});
  EXPECT_EQ(penalty_filter({&a, &b}, {}).size(), 2u);
}
