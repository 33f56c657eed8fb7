#pragma once

// The tree-shaped search space. Children of a node are addressed by a numeric
// index into a fixed enumeration order, so a child can be instantiated without
// materializing its siblings:
//
//   tile < interchange < parallelize_thread < unroll < reverse < pack
//
// Within a kind, targets follow document order of the nest (chains by their top
// loop) and parameters follow the order of the lists in SpaceParams.

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "pragma_mcts/error.hpp"
#include "pragma_mcts/loop_model.hpp"
#include "pragma_mcts/rng.hpp"

namespace pmcts {

struct SpaceParams {
  std::vector<int> tile_sizes{2, 3, 4, 5, 8, 16, 32, 64, 128, 256};
  std::vector<int> unroll_factors{2, 4, 8};
  std::vector<bool> peel_variants{false, true};
  int d_max = 5;
  // Perfect nests up to this depth get every non-identity permutation; deeper
  // nests only get adjacent-pair swaps.
  int max_full_permutation_depth = 4;
};

struct SpaceNode {
  Configuration config;
  LoopNest nest;

  static SpaceNode root(LoopNest nest) { return SpaceNode{Configuration{}, std::move(nest)}; }
  std::size_t depth() const { return config.depth(); }
};

namespace detail {

inline std::uint64_t factorial(int k) {
  std::uint64_t f = 1;
  for (int i = 2; i <= k; ++i) f *= static_cast<std::uint64_t>(i);
  return f;
}

inline std::size_t interchange_count(std::size_t k, const SpaceParams& params) {
  if (k < 2) return 0;
  if (static_cast<int>(k) <= params.max_full_permutation_depth) return factorial(static_cast<int>(k)) - 1;
  return k - 1;
}

// The n-th non-identity permutation of 0..k-1.
inline std::vector<int> nth_interchange(std::size_t k, std::size_t n, const SpaceParams& params) {
  std::vector<int> perm(k);
  for (std::size_t i = 0; i < k; ++i) perm[i] = static_cast<int>(i);
  if (static_cast<int>(k) > params.max_full_permutation_depth) {
    std::swap(perm[n], perm[n + 1]);
    return perm;
  }
  // Lexicographic rank n + 1 (rank 0 is the identity), decoded in the factorial number system.
  std::uint64_t rank = n + 1;
  std::vector<int> pool = perm;
  for (std::size_t i = 0; i < k; ++i) {
    const std::uint64_t f = factorial(static_cast<int>(k - 1 - i));
    const std::size_t pick = static_cast<std::size_t>(rank / f);
    rank %= f;
    perm[i] = pool[pick];
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
  }
  return perm;
}

inline std::optional<std::size_t> interchange_rank(const std::vector<int>& perm, const SpaceParams& params) {
  const std::size_t k = perm.size();
  if (static_cast<int>(k) > params.max_full_permutation_depth) {
    for (std::size_t q = 0; q + 1 < k; ++q) {
      if (nth_interchange(k, q, params) == perm) return q;
    }
    return std::nullopt;
  }
  std::uint64_t rank = 0;
  std::vector<int> pool(k);
  for (std::size_t i = 0; i < k; ++i) pool[i] = static_cast<int>(i);
  for (std::size_t i = 0; i < k; ++i) {
    auto it = std::find(pool.begin(), pool.end(), perm[i]);
    if (it == pool.end()) return std::nullopt;
    rank += static_cast<std::uint64_t>(it - pool.begin()) * factorial(static_cast<int>(k - 1 - i));
    pool.erase(it);
  }
  if (rank == 0) return std::nullopt;
  return static_cast<std::size_t>(rank - 1);
}

// Per-kind blocks of the child enumeration for one nest.
struct ChildLayout {
  std::vector<std::vector<std::string>> chains;
  std::vector<const Loop*> loops;       // transformable loops
  std::vector<const Loop*> unrollable;  // transformable and not yet unrolled
  std::vector<const Loop*> reversible;  // transformable and not yet reversed
  std::vector<std::pair<const Loop*, std::string>> packs;
  std::vector<std::size_t> interchange_offsets;  // prefix sums over chains
  std::array<std::size_t, kTransformKindCount> counts{};

  ChildLayout(const LoopNest& nest, const SpaceParams& params) : chains(perfect_nests(nest)) {
    for (const Loop* l : nest.preorder()) {
      if (!l->transformable) continue;
      loops.push_back(l);
      if (l->unrollable) unrollable.push_back(l);
      if (l->reversible) reversible.push_back(l);
      for (const auto& a : nest.arrays) {
        if (!std::binary_search(l->packed.begin(), l->packed.end(), a)) packs.emplace_back(l, a);
      }
    }
    interchange_offsets.push_back(0);
    for (const auto& c : chains)
      interchange_offsets.push_back(interchange_offsets.back() + interchange_count(c.size(), params));

    counts[0] = chains.size() * params.tile_sizes.size() * params.peel_variants.size();
    counts[1] = interchange_offsets.back();
    counts[2] = loops.size();
    counts[3] = unrollable.size() * (1 + params.unroll_factors.size());
    counts[4] = reversible.size();
    counts[5] = packs.size();
  }

  std::size_t total() const {
    std::size_t n = 0;
    for (auto c : counts) n += c;
    return n;
  }
  std::size_t offset(TransformKind k) const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < static_cast<std::size_t>(k); ++i) n += counts[i];
    return n;
  }
};

template <typename T>
std::optional<std::size_t> position_of(const std::vector<T>& v, const T& x) {
  auto it = std::find(v.begin(), v.end(), x);
  if (it == v.end()) return std::nullopt;
  return static_cast<std::size_t>(it - v.begin());
}

inline std::optional<std::size_t> loop_position(const std::vector<const Loop*>& loops, const std::string& id) {
  for (std::size_t i = 0; i < loops.size(); ++i) {
    if (loops[i]->id == id) return i;
  }
  return std::nullopt;
}

}  // namespace detail

// Number of single-step extensions of node that survive pruning, computed from
// the nest without building any child.
inline std::size_t child_count(const SpaceNode& node, const SpaceParams& params) {
  return detail::ChildLayout(node.nest, params).total();
}

// The transformation that leads to child `index`.
inline Transformation child_transformation(const SpaceNode& node, std::size_t index, const SpaceParams& params) {
  const detail::ChildLayout layout(node.nest, params);
  const std::size_t total = layout.total();
  if (index >= total) throw IndexOutOfRangeError(index, total);

  std::size_t i = index;
  if (i < layout.counts[0]) {
    const std::size_t per_chain = params.tile_sizes.size() * params.peel_variants.size();
    const auto& chain = layout.chains[i / per_chain];
    const std::size_t rem = i % per_chain;
    return Tile{chain.front(), params.tile_sizes[rem / params.peel_variants.size()],
                params.peel_variants[rem % params.peel_variants.size()]};
  }
  i -= layout.counts[0];
  if (i < layout.counts[1]) {
    const auto& off = layout.interchange_offsets;
    const std::size_t c = static_cast<std::size_t>(std::upper_bound(off.begin(), off.end(), i) - off.begin()) - 1;
    return Interchange{layout.chains[c].front(), detail::nth_interchange(layout.chains[c].size(), i - off[c], params)};
  }
  i -= layout.counts[1];
  if (i < layout.counts[2]) return ParallelizeThread{layout.loops[i]->id};
  i -= layout.counts[2];
  if (i < layout.counts[3]) {
    const std::size_t per_loop = 1 + params.unroll_factors.size();
    const Loop* l = layout.unrollable[i / per_loop];
    const std::size_t p = i % per_loop;
    return p == 0 ? Unroll{l->id, std::nullopt} : Unroll{l->id, params.unroll_factors[p - 1]};
  }
  i -= layout.counts[3];
  if (i < layout.counts[4]) return Reverse{layout.reversible[i]->id};
  i -= layout.counts[4];
  return Pack{layout.packs[i].first->id, layout.packs[i].second};
}

inline SpaceNode child(const SpaceNode& node, std::size_t index, const SpaceParams& params) {
  Transformation t = child_transformation(node, index, params);
  SpaceNode out{node.config.extended(t), pmcts::apply(node.nest, t)};
  return out;
}

// Inverse of child_transformation: the index under which t appears among
// node's children, or nullopt if t is not an (unpruned) child.
inline std::optional<std::size_t> child_index(const SpaceNode& node, const Transformation& t,
                                              const SpaceParams& params) {
  const detail::ChildLayout layout(node.nest, params);
  const std::size_t base = layout.offset(kind_of(t));
  struct V {
    const detail::ChildLayout& layout;
    const SpaceParams& params;
    std::optional<std::size_t> operator()(const Tile& x) const {
      std::optional<std::size_t> c;
      for (std::size_t k = 0; k < layout.chains.size(); ++k)
        if (layout.chains[k].front() == x.nest_top) c = k;
      auto s = detail::position_of(params.tile_sizes, x.size);
      auto p = detail::position_of(params.peel_variants, x.peel);
      if (!c || !s || !p) return std::nullopt;
      return (*c * params.tile_sizes.size() + *s) * params.peel_variants.size() + *p;
    }
    std::optional<std::size_t> operator()(const Interchange& x) const {
      for (std::size_t k = 0; k < layout.chains.size(); ++k) {
        if (layout.chains[k].front() != x.nest_top) continue;
        if (x.permutation.size() != layout.chains[k].size()) return std::nullopt;
        auto r = detail::interchange_rank(x.permutation, params);
        if (!r) return std::nullopt;
        return layout.interchange_offsets[k] + *r;
      }
      return std::nullopt;
    }
    std::optional<std::size_t> operator()(const ParallelizeThread& x) const {
      return detail::loop_position(layout.loops, x.loop);
    }
    std::optional<std::size_t> operator()(const Unroll& x) const {
      auto l = detail::loop_position(layout.unrollable, x.loop);
      if (!l) return std::nullopt;
      const std::size_t per_loop = 1 + params.unroll_factors.size();
      if (!x.factor) return *l * per_loop;
      auto f = detail::position_of(params.unroll_factors, *x.factor);
      if (!f) return std::nullopt;
      return *l * per_loop + 1 + *f;
    }
    std::optional<std::size_t> operator()(const Reverse& x) const {
      return detail::loop_position(layout.reversible, x.loop);
    }
    std::optional<std::size_t> operator()(const Pack& x) const {
      for (std::size_t k = 0; k < layout.packs.size(); ++k)
        if (layout.packs[k].first->id == x.loop && layout.packs[k].second == x.array) return k;
      return std::nullopt;
    }
  };
  auto local = std::visit(V{layout, params}, t);
  if (!local) return std::nullopt;
  return base + *local;
}

// Walks up to `depth` uniformly random child steps from node, stopping early at
// a node without children.
inline SpaceNode random_walk(const SpaceNode& node, std::size_t depth, const SpaceParams& params, Rng& rng) {
  SpaceNode cur = node;
  for (std::size_t step = 0; step < depth; ++step) {
    const std::size_t n = child_count(cur, params);
    if (n == 0) break;
    cur = child(cur, static_cast<std::size_t>(rng.uniform_index(n)), params);
  }
  return cur;
}

}  // namespace pmcts
