#pragma once

// Loop nests, the six loop transformations, and pragma rendering.
//
// A nest records only loop structure: the loop bodies are abstracted away and
// legality is left to the compiler behind the evaluator. Each Loop carries the
// flags the search-space pruning relies on and the template anchor its pragmas
// are written above.

#include <algorithm>
#include <cstddef>
#include <fstream>
#include <map>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <variant>
#include <vector>

#include <json.hpp>

#include "pragma_mcts/error.hpp"

namespace pmcts {

struct Loop {
  std::string id;
  std::vector<Loop> children;
  // False once the loop (or an ancestor) was parallelized; no transformation may target it.
  bool transformable = true;
  bool unrollable = true;
  bool reversible = true;
  // Arrays already packed on this loop, sorted.
  std::vector<std::string> packed;
  // "floor" or "tile" for loops created by tiling, empty for source loops.
  std::string origin;
  // Source-template loop whose pragma stack this loop's directives go into.
  std::string anchor;

  friend bool operator==(const Loop&, const Loop&) = default;
};

struct LoopNest {
  std::vector<Loop> roots;
  std::vector<std::string> arrays;

  friend bool operator==(const LoopNest&, const LoopNest&) = default;

  const Loop* find(std::string_view id) const { return find_in(roots, id); }

  // Loops in depth-first document order.
  std::vector<const Loop*> preorder() const {
    std::vector<const Loop*> out;
    collect(roots, out);
    return out;
  }

  std::size_t size() const { return preorder().size(); }

 private:
  static const Loop* find_in(const std::vector<Loop>& loops, std::string_view id) {
    for (const Loop& l : loops) {
      if (l.id == id) return &l;
      if (const Loop* hit = find_in(l.children, id)) return hit;
    }
    return nullptr;
  }
  static void collect(const std::vector<Loop>& loops, std::vector<const Loop*>& out) {
    for (const Loop& l : loops) {
      out.push_back(&l);
      collect(l.children, out);
    }
  }
};

// ---------------------------------------------------------------------------
// Transformations

// Tiles the perfect nest starting at nest_top with one size for every loop.
struct Tile {
  std::string nest_top;
  int size = 0;
  bool peel = false;
  friend bool operator==(const Tile&, const Tile&) = default;
};

// permutation[q] is the original chain position of the loop placed at depth q.
struct Interchange {
  std::string nest_top;
  std::vector<int> permutation;
  friend bool operator==(const Interchange&, const Interchange&) = default;
};

struct ParallelizeThread {
  std::string loop;
  friend bool operator==(const ParallelizeThread&, const ParallelizeThread&) = default;
};

// factor == nullopt is full unrolling.
struct Unroll {
  std::string loop;
  std::optional<int> factor;
  friend bool operator==(const Unroll&, const Unroll&) = default;
};

struct Reverse {
  std::string loop;
  friend bool operator==(const Reverse&, const Reverse&) = default;
};

struct Pack {
  std::string loop;
  std::string array;
  friend bool operator==(const Pack&, const Pack&) = default;
};

using Transformation = std::variant<Tile, Interchange, ParallelizeThread, Unroll, Reverse, Pack>;

// Declaration order doubles as the child enumeration order.
enum class TransformKind { kTile = 0, kInterchange, kParallelizeThread, kUnroll, kReverse, kPack };
inline constexpr std::size_t kTransformKindCount = 6;

inline TransformKind kind_of(const Transformation& t) { return static_cast<TransformKind>(t.index()); }

inline std::string_view kind_name(TransformKind k) {
  switch (k) {
    case TransformKind::kTile: return "tile";
    case TransformKind::kInterchange: return "interchange";
    case TransformKind::kParallelizeThread: return "parallelize_thread";
    case TransformKind::kUnroll: return "unroll";
    case TransformKind::kReverse: return "reverse";
    case TransformKind::kPack: return "pack";
  }
  return "?";
}

// The loop id a transformation is attached to.
inline const std::string& target_of(const Transformation& t) {
  return std::visit(
      [](const auto& x) -> const std::string& {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, Tile> || std::is_same_v<T, Interchange>) {
          return x.nest_top;
        } else {
          return x.loop;
        }
      },
      t);
}

namespace detail {

inline std::string join_ints(const std::vector<int>& v, char sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += sep;
    out += std::to_string(v[i]);
  }
  return out;
}

}  // namespace detail

// Unique text form of one step. Identifiers cannot contain the punctuation used here.
inline std::string canonical_key(const Transformation& t) {
  struct V {
    std::string operator()(const Tile& x) const {
      return "tile(" + x.nest_top + "," + std::to_string(x.size) + (x.peel ? ",peel)" : ")");
    }
    std::string operator()(const Interchange& x) const {
      return "interchange(" + x.nest_top + ",[" + detail::join_ints(x.permutation, ',') + "])";
    }
    std::string operator()(const ParallelizeThread& x) const { return "parallelize_thread(" + x.loop + ")"; }
    std::string operator()(const Unroll& x) const {
      return "unroll(" + x.loop + "," + (x.factor ? std::to_string(*x.factor) : std::string("full")) + ")";
    }
    std::string operator()(const Reverse& x) const { return "reverse(" + x.loop + ")"; }
    std::string operator()(const Pack& x) const { return "pack(" + x.loop + "," + x.array + ")"; }
  };
  return std::visit(V{}, t);
}

// Kind and parameters without loop ids. Two steps with equal signatures are the
// "same pragma" even when they target loops of different branches.
inline std::string pragma_signature(const Transformation& t) {
  struct V {
    std::string operator()(const Tile& x) const {
      return "tile sizes(" + std::to_string(x.size) + ")" + (x.peel ? " peel(rectangular)" : "");
    }
    std::string operator()(const Interchange& x) const {
      return "interchange permutation(" + detail::join_ints(x.permutation, ',') + ")";
    }
    std::string operator()(const ParallelizeThread&) const { return "parallelize_thread"; }
    std::string operator()(const Unroll& x) const {
      return x.factor ? "unrolling factor(" + std::to_string(*x.factor) + ")" : std::string("unrolling full");
    }
    std::string operator()(const Reverse&) const { return "reverse"; }
    std::string operator()(const Pack& x) const { return "pack array(" + x.array + ")"; }
  };
  return std::visit(V{}, t);
}

// An ordered transformation sequence; the empty sequence is the original program.
struct Configuration {
  std::vector<Transformation> steps;

  std::size_t depth() const { return steps.size(); }
  bool empty() const { return steps.empty(); }

  Configuration extended(Transformation t) const {
    Configuration c = *this;
    c.steps.push_back(std::move(t));
    return c;
  }

  friend bool operator==(const Configuration&, const Configuration&) = default;
};

inline std::string canonical_key(const Configuration& config) {
  std::string out;
  for (std::size_t i = 0; i < config.steps.size(); ++i) {
    if (i) out += ';';
    out += canonical_key(config.steps[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Nest queries

// Maximal perfect chains of transformable loops, ordered by their top loop in
// document order. A loop continues its parent's chain iff the parent is
// transformable and has it as its only child.
inline std::vector<std::vector<std::string>> perfect_nests(const LoopNest& nest) {
  std::vector<std::vector<std::string>> chains;
  auto walk = [&](auto&& self, const std::vector<Loop>& loops, const Loop* parent) -> void {
    for (const Loop& l : loops) {
      const bool continues = parent && parent->transformable && parent->children.size() == 1;
      if (l.transformable && !continues) {
        std::vector<std::string> chain{l.id};
        const Loop* cur = &l;
        while (cur->children.size() == 1 && cur->children.front().transformable) {
          cur = &cur->children.front();
          chain.push_back(cur->id);
        }
        chains.push_back(std::move(chain));
      }
      self(self, l.children, &l);
    }
  };
  walk(walk, nest.roots, nullptr);
  return chains;
}

// The maximal chain whose top is `top`, or nullopt if `top` does not start one.
inline std::optional<std::vector<std::string>> chain_at(const LoopNest& nest, std::string_view top) {
  for (auto& chain : perfect_nests(nest)) {
    if (chain.front() == top) return chain;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// apply()

namespace detail {

struct Slot {
  std::vector<Loop>* container = nullptr;
  std::size_t index = 0;
  Loop& loop() const { return (*container)[index]; }
};

inline std::optional<Slot> locate(std::vector<Loop>& loops, std::string_view id) {
  for (std::size_t i = 0; i < loops.size(); ++i) {
    if (loops[i].id == id) return Slot{&loops, i};
    if (auto hit = locate(loops[i].children, id)) return hit;
  }
  return std::nullopt;
}

inline void freeze(Loop& l) {
  l.transformable = false;
  for (Loop& c : l.children) freeze(c);
}

inline const Loop& require_target(const LoopNest& nest, const std::string& id) {
  const Loop* l = nest.find(id);
  if (!l) throw InvalidTargetError("no loop '" + id + "'");
  if (!l->transformable) throw InvalidTargetError("loop '" + id + "' is not transformable");
  return *l;
}

inline std::vector<std::string> require_chain(const LoopNest& nest, const std::string& top) {
  require_target(nest, top);
  auto chain = chain_at(nest, top);
  if (!chain) throw InvalidTargetError("loop '" + top + "' does not start a perfect nest");
  return *chain;
}

// Detaches the chain rooted at slot and returns its loops outermost first plus
// the innermost loop's children.
inline std::pair<std::vector<Loop>, std::vector<Loop>> unchain(Loop top, std::size_t depth) {
  std::vector<Loop> chain;
  chain.push_back(std::move(top));
  while (chain.size() < depth) {
    Loop next = std::move(chain.back().children.front());
    chain.back().children.clear();
    chain.push_back(std::move(next));
  }
  std::vector<Loop> body = std::move(chain.back().children);
  chain.back().children.clear();
  return {std::move(chain), std::move(body)};
}

inline Loop rechain(std::vector<Loop> chain, std::vector<Loop> body) {
  chain.back().children = std::move(body);
  for (std::size_t i = chain.size() - 1; i > 0; --i) {
    chain[i - 1].children.clear();
    chain[i - 1].children.push_back(std::move(chain[i]));
  }
  return std::move(chain.front());
}

}  // namespace detail

// Throws InvalidTargetError when t cannot be applied to nest.
inline void validate(const LoopNest& nest, const Transformation& t) {
  struct V {
    const LoopNest& nest;
    void operator()(const Tile& x) const {
      if (x.size < 1) throw InvalidTargetError("tile size must be positive");
      detail::require_chain(nest, x.nest_top);
    }
    void operator()(const Interchange& x) const {
      auto chain = detail::require_chain(nest, x.nest_top);
      if (x.permutation.size() != chain.size())
        throw InvalidTargetError("permutation length " + std::to_string(x.permutation.size()) +
                                 " does not match nest depth " + std::to_string(chain.size()));
      std::vector<int> sorted = x.permutation;
      std::sort(sorted.begin(), sorted.end());
      for (std::size_t i = 0; i < sorted.size(); ++i) {
        if (sorted[i] != static_cast<int>(i)) throw InvalidTargetError("not a permutation");
      }
      if (sorted == x.permutation) throw InvalidTargetError("identity permutation");
    }
    void operator()(const ParallelizeThread& x) const { detail::require_target(nest, x.loop); }
    void operator()(const Unroll& x) const {
      const Loop& l = detail::require_target(nest, x.loop);
      if (!l.unrollable) throw InvalidTargetError("loop '" + x.loop + "' was already unrolled");
      if (x.factor && *x.factor < 1) throw InvalidTargetError("unroll factor must be positive");
    }
    void operator()(const Reverse& x) const {
      const Loop& l = detail::require_target(nest, x.loop);
      if (!l.reversible) throw InvalidTargetError("loop '" + x.loop + "' was already reversed");
    }
    void operator()(const Pack& x) const {
      const Loop& l = detail::require_target(nest, x.loop);
      if (std::find(nest.arrays.begin(), nest.arrays.end(), x.array) == nest.arrays.end())
        throw InvalidTargetError("unknown array '" + x.array + "'");
      if (std::binary_search(l.packed.begin(), l.packed.end(), x.array))
        throw InvalidTargetError("array '" + x.array + "' already packed on loop '" + x.loop + "'");
    }
  };
  std::visit(V{nest}, t);
}

// Returns the nest after t; the input is left untouched.
inline LoopNest apply(const LoopNest& nest, const Transformation& t) {
  validate(nest, t);
  LoopNest out = nest;
  auto slot = *detail::locate(out.roots, target_of(t));

  struct V {
    detail::Slot slot;
    const LoopNest& before;
    void operator()(const Tile& x) const {
      const std::size_t k = chain_at(before, x.nest_top)->size();
      const std::string anchor = slot.loop().anchor;
      auto [chain, body] = detail::unchain(std::move(slot.loop()), k);
      std::vector<Loop> tiled;
      for (const char* origin : {"floor", "tile"}) {
        for (const Loop& l : chain) {
          Loop n;
          n.id = l.id + "." + origin;
          n.origin = origin;
          n.anchor = anchor;
          tiled.push_back(std::move(n));
        }
      }
      slot.loop() = detail::rechain(std::move(tiled), std::move(body));
    }
    void operator()(const Interchange& x) const {
      const std::string anchor = slot.loop().anchor;
      auto [chain, body] = detail::unchain(std::move(slot.loop()), x.permutation.size());
      std::vector<Loop> permuted;
      for (int p : x.permutation) {
        permuted.push_back(std::move(chain[static_cast<std::size_t>(p)]));
        permuted.back().anchor = anchor;
      }
      slot.loop() = detail::rechain(std::move(permuted), std::move(body));
    }
    void operator()(const ParallelizeThread&) const { detail::freeze(slot.loop()); }
    void operator()(const Unroll& x) const {
      if (x.factor) {
        slot.loop().unrollable = false;
        return;
      }
      // Full unrolling leaves the body in place of the loop.
      std::vector<Loop> body = std::move(slot.loop().children);
      auto& c = *slot.container;
      c.erase(c.begin() + static_cast<std::ptrdiff_t>(slot.index));
      c.insert(c.begin() + static_cast<std::ptrdiff_t>(slot.index), std::make_move_iterator(body.begin()),
               std::make_move_iterator(body.end()));
    }
    void operator()(const Reverse&) const { slot.loop().reversible = false; }
    void operator()(const Pack& x) const {
      auto& packed = slot.loop().packed;
      packed.insert(std::upper_bound(packed.begin(), packed.end(), x.array), x.array);
    }
  };
  std::visit(V{slot, nest}, t);
  return out;
}

inline LoopNest fold(const LoopNest& root, const Configuration& config) {
  LoopNest nest = root;
  for (const auto& step : config.steps) nest = pmcts::apply(nest, step);
  return nest;
}

// ---------------------------------------------------------------------------
// Loading

namespace detail {

inline bool is_identifier(std::string_view s) {
  static const std::regex re("[A-Za-z_][A-Za-z0-9_]*");
  return std::regex_match(s.begin(), s.end(), re);
}

inline Loop parse_loop(const nlohmann::json& j, std::unordered_set<std::string>& seen) {
  if (!j.is_object()) throw ParseError("loop entry must be an object");
  if (!j.contains("id") || !j["id"].is_string()) throw ParseError("loop entry without string 'id'");
  Loop l;
  l.id = j["id"].get<std::string>();
  if (!is_identifier(l.id)) throw ParseError("loop id '" + l.id + "' is not an identifier");
  if (!seen.insert(l.id).second) throw DuplicateIdError(l.id);
  l.anchor = l.id;
  if (j.contains("transformable")) {
    if (!j["transformable"].is_boolean()) throw ParseError("'transformable' must be a boolean");
    l.transformable = j["transformable"].get<bool>();
  }
  if (j.contains("children")) {
    if (!j["children"].is_array()) throw ParseError("'children' must be a list");
    for (const auto& c : j["children"]) l.children.push_back(parse_loop(c, seen));
  }
  return l;
}

}  // namespace detail

// Parses a nest description:
//   {"arrays": ["A", ...], "loops": [{"id": "i", "transformable": true, "children": [...]}, ...]}
inline LoopNest load_loop_nest(std::string_view document) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(document.begin(), document.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(e.what());
  }
  if (!j.is_object() || !j.contains("loops") || !j["loops"].is_array())
    throw ParseError("nest document needs a 'loops' list");
  LoopNest nest;
  std::unordered_set<std::string> seen;
  for (const auto& l : j["loops"]) nest.roots.push_back(detail::parse_loop(l, seen));
  if (j.contains("arrays")) {
    if (!j["arrays"].is_array()) throw ParseError("'arrays' must be a list");
    for (const auto& a : j["arrays"]) {
      if (!a.is_string() || !detail::is_identifier(a.get<std::string>()))
        throw ParseError("array names must be identifiers");
      if (std::find(nest.arrays.begin(), nest.arrays.end(), a.get<std::string>()) != nest.arrays.end())
        throw ParseError("duplicate array '" + a.get<std::string>() + "'");
      nest.arrays.push_back(a.get<std::string>());
    }
  }
  return nest;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline LoopNest load_loop_nest_file(const std::string& path) { return load_loop_nest(read_text_file(path)); }

// ---------------------------------------------------------------------------
// Rendering

namespace detail {

inline std::string directive(const LoopNest& nest, const Transformation& t) {
  if (const auto* x = std::get_if<Tile>(&t)) {
    const std::size_t k = chain_at(nest, x->nest_top)->size();
    std::string sizes;
    for (std::size_t i = 0; i < k; ++i) sizes += (i ? "," : "") + std::to_string(x->size);
    return "tile sizes(" + sizes + ")" + (x->peel ? " peel(rectangular)" : "");
  }
  if (const auto* x = std::get_if<Interchange>(&t)) {
    const auto chain = *chain_at(nest, x->nest_top);
    std::string ids;
    for (std::size_t q = 0; q < x->permutation.size(); ++q)
      ids += (q ? "," : "") + chain[static_cast<std::size_t>(x->permutation[q])];
    return "interchange permutation(" + ids + ")";
  }
  return pragma_signature(t);
}

}  // namespace detail

// One explicit `#pragma clang loop(<id>) ...` line per step, in application order.
inline std::vector<std::string> pragma_list(const LoopNest& root, const Configuration& config) {
  std::vector<std::string> out;
  LoopNest nest = root;
  for (const auto& step : config.steps) {
    validate(nest, step);
    out.push_back("#pragma clang loop(" + target_of(step) + ") " + detail::directive(nest, step));
    nest = pmcts::apply(nest, step);
  }
  return out;
}

// Inserts the configuration's pragmas into a source template. Every source loop
// is marked by a `/*@loop:<id>*/` comment on the line before its header; the
// pragmas replace that comment, most recently applied on top, and anchors
// without pragmas are left as they are. A directive on the loop that currently
// sits on the header line is written in the plain form; any other loop in the
// same stack is named with the `loop(<id>)` clause.
inline std::string render_pragmas(const LoopNest& root, const Configuration& config, std::string_view source) {
  std::vector<std::string> lines;
  {
    std::size_t start = 0;
    while (true) {
      const std::size_t nl = source.find('\n', start);
      if (nl == std::string_view::npos) {
        lines.emplace_back(source.substr(start));
        break;
      }
      lines.emplace_back(source.substr(start, nl - start));
      start = nl + 1;
    }
  }

  static const std::regex anchor_re(R"(/\*@loop:([A-Za-z_][A-Za-z0-9_.]*)\*/)");
  std::map<std::string, std::size_t> anchor_line;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    for (std::sregex_iterator it(lines[i].begin(), lines[i].end(), anchor_re), end; it != end; ++it)
      anchor_line.emplace((*it)[1].str(), i);
  }

  std::map<std::string, std::vector<std::string>> stacks;
  std::map<std::string, std::string> head;  // loop currently on each anchor's header line
  LoopNest nest = root;
  for (const auto& step : config.steps) {
    validate(nest, step);
    const std::string& target = target_of(step);
    const std::string anchor = nest.find(target)->anchor;
    if (!anchor_line.count(anchor)) throw MissingAnchorError(anchor);
    auto [h, inserted] = head.try_emplace(anchor, anchor);
    const bool plain = h->second == target;
    stacks[anchor].push_back(std::string(plain ? "#pragma clang loop " : "#pragma clang loop(" + target + ") ") +
                             detail::directive(nest, step));
    if (plain) {
      if (std::holds_alternative<Tile>(step)) {
        h->second = target + ".floor";
      } else if (const auto* x = std::get_if<Interchange>(&step)) {
        h->second = (*chain_at(nest, x->nest_top))[static_cast<std::size_t>(x->permutation.front())];
      } else if (const auto* u = std::get_if<Unroll>(&step); u && !u->factor) {
        h->second.clear();
      }
    }
    nest = pmcts::apply(nest, step);
  }

  std::vector<std::vector<std::string>> inserts(lines.size());
  for (auto& [anchor, stack] : stacks) {
    const std::size_t at = anchor_line[anchor];
    const std::string& header = at + 1 < lines.size() ? lines[at + 1] : lines[at];
    const std::string indent = header.substr(0, header.find_first_not_of(" \t") == std::string::npos
                                                    ? 0
                                                    : header.find_first_not_of(" \t"));
    for (auto it = stack.rbegin(); it != stack.rend(); ++it) inserts[at].push_back(indent + *it);
  }

  // A pragma stack replaces its anchor comment; the line goes if nothing else is on it.
  std::vector<std::string> out_lines;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (inserts[i].empty()) {
      out_lines.push_back(lines[i]);
      continue;
    }
    const std::string stripped = std::regex_replace(lines[i], anchor_re, "");
    if (stripped.find_first_not_of(" \t\r") != std::string::npos) out_lines.push_back(stripped);
    for (const auto& p : inserts[i]) out_lines.push_back(p);
  }
  std::string out;
  for (std::size_t i = 0; i < out_lines.size(); ++i) {
    if (i) out += '\n';
    out += out_lines[i];
  }
  return out;
}

}  // namespace pmcts
