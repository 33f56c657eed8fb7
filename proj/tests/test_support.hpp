#pragma once

// Shared fixtures: small nests, evaluator stubs, scratch directories.

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "pragma_mcts.hpp"

namespace testing_support {

using namespace pmcts;

inline Loop make_loop(std::string id, std::vector<Loop> children = {}, bool transformable = true) {
  Loop l;
  l.id = id;
  l.anchor = id;
  l.children = std::move(children);
  l.transformable = transformable;
  return l;
}

inline LoopNest single_loop() {
  LoopNest n;
  n.roots.push_back(make_loop("i"));
  return n;
}

inline LoopNest perfect2() {
  LoopNest n;
  n.roots.push_back(make_loop("i", {make_loop("j")}));
  return n;
}

// The triple loop of a matrix multiply.
inline LoopNest gemm() {
  LoopNest n;
  n.roots.push_back(make_loop("i", {make_loop("j", {make_loop("k")})}));
  n.arrays = {"A", "B", "C"};
  return n;
}

// Every loop frozen, so the space is just the root.
inline LoopNest frozen() {
  LoopNest n;
  n.roots.push_back(make_loop("i", {make_loop("j", {}, false)}, false));
  return n;
}

// Looks outcomes up by canonical key; unknown keys take `fallback`. Counts calls.
class TableEvaluator : public Evaluator {
 public:
  explicit TableEvaluator(std::map<std::string, Outcome> table, Outcome fallback = Time{1.0})
      : table_(std::move(table)), fallback_(std::move(fallback)) {}

  Outcome evaluate(const Configuration& config) override {
    ++calls_;
    auto it = table_.find(canonical_key(config));
    return it == table_.end() ? fallback_ : it->second;
  }

  std::size_t calls() const { return calls_.load(); }

 private:
  std::map<std::string, Outcome> table_;
  Outcome fallback_;
  std::atomic<std::size_t> calls_{0};
};

// Wraps another evaluator and counts calls.
class CountingEvaluator : public Evaluator {
 public:
  explicit CountingEvaluator(Evaluator& inner) : inner_(inner) {}
  Outcome evaluate(const Configuration& config) override {
    ++calls_;
    return inner_.evaluate(config);
  }
  std::optional<double> simulated_cost(const Outcome& o) const override { return inner_.simulated_cost(o); }
  std::size_t calls() const { return calls_.load(); }

 private:
  Evaluator& inner_;
  std::atomic<std::size_t> calls_{0};
};

inline SearchSession make_session(const LoopNest& nest, Evaluator& ev, std::size_t max_unique,
                                  std::string method = "test") {
  return SearchSession(nest, ev, Budget{max_unique, 1e12}, std::move(method));
}

// A fresh directory under the system temp dir, removed on destruction.
class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("pmcts_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

  std::string write(const std::string& name, const std::string& text) const {
    std::ofstream out(path_ / name, std::ios::binary);
    out << text;
    return file(name);
  }

 private:
  std::filesystem::path path_;
};

// Random loop forest with up to max_loops loops; some loops start frozen.
inline LoopNest random_nest(std::mt19937_64& gen, int max_loops = 6) {
  std::uniform_int_distribution<int> count_dist(1, max_loops);
  const int n = count_dist(gen);
  std::bernoulli_distribution frozen_dist(0.15);
  // Build by attaching each new loop under a random existing loop or as a root.
  struct Node {
    std::string id;
    int parent;
    bool transformable;
  };
  std::vector<Node> nodes;
  for (int i = 0; i < n; ++i) {
    std::uniform_int_distribution<int> parent_dist(-1, i - 1);
    nodes.push_back({"L" + std::to_string(i), i == 0 ? -1 : parent_dist(gen), !frozen_dist(gen)});
  }
  auto build = [&](auto&& self, int idx) -> Loop {
    std::vector<Loop> kids;
    for (int c = 0; c < n; ++c) {
      if (nodes[static_cast<std::size_t>(c)].parent == idx) kids.push_back(self(self, c));
    }
    return make_loop(nodes[static_cast<std::size_t>(idx)].id, std::move(kids),
                     nodes[static_cast<std::size_t>(idx)].transformable);
  };
  LoopNest nest;
  for (int i = 0; i < n; ++i) {
    if (nodes[static_cast<std::size_t>(i)].parent == -1) nest.roots.push_back(build(build, i));
  }
  std::uniform_int_distribution<int> arrays_dist(0, 2);
  const int arrays = arrays_dist(gen);
  for (int a = 0; a < arrays; ++a) nest.arrays.push_back(std::string(1, static_cast<char>('A' + a)));
  return nest;
}

}  // namespace testing_support
