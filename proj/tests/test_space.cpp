#include <gtest/gtest.h>

#include <random>

#include "oracle.hpp"
#include "test_support.hpp"

using namespace pmcts;
using namespace testing_support;

TEST(ChildCount, SingleLoopDefaults) {
  const SpaceParams params;
  const auto root = SpaceNode::root(single_loop());
  EXPECT_EQ(child_count(root, params), 26u);
  EXPECT_EQ(oracle::enumerate(root.nest, params).size(), 26u);
}

TEST(ChildCount, FrozenNestHasNoChildren) {
  EXPECT_EQ(child_count(SpaceNode::root(frozen()), SpaceParams{}), 0u);
  const auto par = apply(single_loop(), ParallelizeThread{"i"});
  EXPECT_EQ(child_count(SpaceNode{Configuration{{ParallelizeThread{"i"}}}, par}, SpaceParams{}), 0u);
}

TEST(ChildCount, DepthTwoNestHasOneInterchange) {
  const SpaceParams params;
  const auto root = SpaceNode::root(perfect2());
  std::size_t interchanges = 0;
  for (std::size_t i = 0; i < child_count(root, params); ++i) {
    if (std::holds_alternative<Interchange>(child_transformation(root, i, params))) ++interchanges;
  }
  EXPECT_EQ(interchanges, 1u);
}

TEST(ChildCount, GemmTotals) {
  // 20 tilings + 5 interchanges + 3 parallelize + 12 unrolls + 3 reverses + 9 packs.
  EXPECT_EQ(child_count(SpaceNode::root(gemm()), SpaceParams{}), 52u);
}

TEST(ChildCount, DeepChainUsesAdjacentSwaps) {
  LoopNest n;
  n.roots.push_back(make_loop("a", {make_loop("b", {make_loop("c", {make_loop("d", {make_loop("e")})})})}));
  const auto root = SpaceNode::root(n);
  const SpaceParams params;
  std::vector<std::vector<int>> perms;
  for (std::size_t i = 0; i < child_count(root, params); ++i) {
    const auto t = child_transformation(root, i, params);
    if (const auto* x = std::get_if<Interchange>(&t)) perms.push_back(x->permutation);
  }
  EXPECT_EQ(perms, (std::vector<std::vector<int>>{{1, 0, 2, 3, 4}, {0, 2, 1, 3, 4}, {0, 1, 3, 2, 4}, {0, 1, 2, 4, 3}}));
}

TEST(Child, FirstIsSmallestTile) {
  const SpaceParams params;
  const auto root = SpaceNode::root(single_loop());
  const auto c = child(root, 0, params);
  ASSERT_EQ(c.config.steps.size(), 1u);
  EXPECT_EQ(c.config.steps[0], Transformation(Tile{"i", 2, false}));
  EXPECT_EQ(c.depth(), 1u);
}

TEST(Child, IndexOutOfRange) {
  const SpaceParams params;
  const auto root = SpaceNode::root(single_loop());
  EXPECT_THROW(child(root, child_count(root, params), params), IndexOutOfRangeError);
  EXPECT_THROW(child(SpaceNode::root(frozen()), 0, params), IndexOutOfRangeError);
}

TEST(Child, MatchesOracleOnGemm) {
  const SpaceParams params;
  const auto root = SpaceNode::root(gemm());
  const auto expected = oracle::enumerate(root.nest, params);
  ASSERT_EQ(expected.size(), child_count(root, params));
  for (std::size_t i = 0; i < expected.size(); ++i) {
    EXPECT_EQ(canonical_key(child_transformation(root, i, params)), canonical_key(expected[i])) << "index " << i;
    EXPECT_EQ(child_index(root, expected[i], params), i);
  }
}

TEST(ChildIndex, RejectsNonChildren) {
  const SpaceParams params;
  const auto root = SpaceNode::root(gemm());
  EXPECT_FALSE(child_index(root, Tile{"i", 7, false}, params));
  EXPECT_FALSE(child_index(root, Tile{"j", 2, false}, params));
  EXPECT_FALSE(child_index(root, Interchange{"i", {0, 1, 2}}, params));
  EXPECT_FALSE(child_index(root, Unroll{"i", 3}, params));
  EXPECT_FALSE(child_index(root, Pack{"i", "Z"}, params));
  EXPECT_FALSE(child_index(root, Reverse{"q"}, params));
}

TEST(Child, NoPrunedPatternsTwoLevelsDeep) {
  const SpaceParams params;
  const auto root = SpaceNode::root(gemm());
  for (std::size_t i = 0; i < child_count(root, params); ++i) {
    const auto c = child(root, i, params);
    for (std::size_t j = 0; j < child_count(c, params); ++j) {
      const auto t = child_transformation(c, j, params);
      EXPECT_NO_THROW(validate(c.nest, t)) << canonical_key(c.config) << " + " << canonical_key(t);
      EXPECT_EQ(child(c, j, params).depth(), c.depth() + 1);
    }
  }
}

TEST(RandomWalk, OneChildNode) {
  SpaceParams params;
  params.tile_sizes = {};
  params.unroll_factors = {};
  // Already unrolled and reversed, so parallelizing is the only option left.
  const SpaceNode node{Configuration{}, apply(apply(single_loop(), Unroll{"i", 2}), Reverse{"i"})};
  ASSERT_EQ(child_count(node, params), 1u);
  Rng rng(7);
  const auto walked = random_walk(node, 1, params, rng);
  EXPECT_EQ(walked.config.steps, (std::vector<Transformation>{ParallelizeThread{"i"}}));
}

TEST(RandomWalk, FrozenRootStaysPut) {
  Rng rng(1);
  const auto walked = random_walk(SpaceNode::root(frozen()), 3, SpaceParams{}, rng);
  EXPECT_EQ(walked.depth(), 0u);
}

TEST(RandomWalk, SeededWalksRepeat) {
  const SpaceParams params;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng a(seed);
    Rng b(seed);
    const auto x = random_walk(SpaceNode::root(gemm()), 5, params, a);
    const auto y = random_walk(SpaceNode::root(gemm()), 5, params, b);
    EXPECT_EQ(canonical_key(x.config), canonical_key(y.config));
    EXPECT_LE(x.depth(), 5u);
  }
}

TEST(RandomWalk, StopsEarlyWhenSpaceEnds) {
  // Parallelizing the only loop ends the branch; every walk through it stops at depth 1.
  SpaceParams params;
  params.tile_sizes = {};
  params.unroll_factors = {};
  LoopNest n = apply(apply(single_loop(), Unroll{"i", 2}), Reverse{"i"});
  const SpaceNode node{Configuration{}, n};
  Rng rng(3);
  const auto walked = random_walk(node, 4, params, rng);
  EXPECT_EQ(walked.depth(), 1u);
}

TEST(Oracle, RandomNestsUpToDepthTwo) {
  std::mt19937_64 gen(2024);
  const SpaceParams params;
  std::size_t nodes_checked = 0;
  for (int trial = 0; trial < 12; ++trial) {
    const LoopNest nest = random_nest(gen, 5);
    std::vector<SpaceNode> frontier{SpaceNode::root(nest)};
    for (int depth = 0; depth <= 2; ++depth) {
      std::vector<SpaceNode> next;
      for (const auto& node : frontier) {
        const auto expected = oracle::enumerate(node.nest, params);
        ASSERT_EQ(child_count(node, params), expected.size()) << canonical_key(node.config);
        if (expected.size() > 200) continue;
        ++nodes_checked;
        for (std::size_t i = 0; i < expected.size(); ++i) {
          const auto c = child(node, i, params);
          ASSERT_EQ(canonical_key(c.config.steps.back()), canonical_key(expected[i]));
          if (depth < 2 && i % 7 == 0) next.push_back(c);
        }
      }
      frontier = std::move(next);
    }
  }
  EXPECT_GT(nodes_checked, 12u);
}
