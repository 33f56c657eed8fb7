#include <gtest/gtest.h>

#include <set>

#include "property_cases.hpp"

using namespace pmcts;
using namespace testing_support;

namespace {

constexpr int kCases = 1000;

// Source text with one anchor line above each loop header.
void emit(const Loop& l, int indent, std::string& out) {
  const std::string pad(static_cast<std::size_t>(indent) * 4, ' ');
  out += pad + "/*@loop:" + l.anchor + "*/\n";
  out += pad + "for (int " + l.id + " = 0; " + l.id + " < n; ++" + l.id + ") {\n";
  for (const auto& c : l.children) emit(c, indent + 1, out);
  out += pad + "    Body();\n" + pad + "}\n";
}

std::string source_for(const LoopNest& nest) {
  std::string out;
  for (const auto& r : nest.roots) emit(r, 0, out);
  return out;
}

}  // namespace

TEST(Properties, SearchInvariants) {
  std::mt19937_64 gen(2024);
  for (int trial = 0; trial < kCases; ++trial) {
    for (const auto& v : property_cases::search_case(gen)) ADD_FAILURE() << "case " << trial << ": " << v;
  }
}

TEST(Properties, RewardCodomain) {
  std::mt19937_64 gen(7);
  for (int trial = 0; trial < kCases; ++trial) {
    for (const auto& v : property_cases::reward_case(gen)) ADD_FAILURE() << "case " << trial << ": " << v;
  }
}

TEST(Properties, ApplyLeavesInputAndRenderingDistinguishes) {
  std::mt19937_64 gen(99);
  for (int trial = 0; trial < kCases; ++trial) {
    SCOPED_TRACE("case " + std::to_string(trial));
    const LoopNest nest = random_nest(gen, 4);
    const LoopNest before = nest;
    SpaceParams params = property_cases::small_space(gen);
    params.d_max = 3;
    const std::string source = source_for(nest);
    const SpaceNode root = SpaceNode::root(nest);
    const std::size_t n = child_count(root, params);

    std::set<std::string> rendered;
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = child(root, i, params);
      EXPECT_TRUE(rendered.insert(render_pragmas(nest, c.config, source)).second) << canonical_key(c.config);
    }
    EXPECT_EQ(nest, before);
    if (n == 0) continue;

    Rng rng(gen());
    const SpaceNode deep = random_walk(root, 3, params, rng);
    const LoopNest folded = fold(nest, deep.config);
    EXPECT_EQ(nest, before);
    if (deep.config.empty()) continue;
    // Applying one more step leaves the folded nest untouched too.
    const LoopNest snapshot = folded;
    const std::size_t m = child_count(deep, params);
    if (m > 0) pmcts::apply(folded, child_transformation(deep, m - 1, params));
    EXPECT_EQ(folded, snapshot);
  }
}
