#pragma once

// Program evaluators: the compile-and-run harness for real toolchains, a
// deterministic synthetic landscape for desk-scale experiments, and the
// unique-configuration cache shared by every search method.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <regex>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "pragma_mcts/error.hpp"
#include "pragma_mcts/loop_model.hpp"
#include "pragma_mcts/process.hpp"
#include "pragma_mcts/record.hpp"
#include "pragma_mcts/rng.hpp"
#include "pragma_mcts/space.hpp"

namespace pmcts {

class Evaluator {
 public:
  virtual ~Evaluator() = default;
  virtual Outcome evaluate(const Configuration& config) = 0;
  // Deterministic evaluators report the time a real measurement would have
  // taken, which drives a simulated wall clock. nullopt means "use the real clock".
  virtual std::optional<double> simulated_cost(const Outcome&) const { return std::nullopt; }
};

// Median of the samples; the mean of the two middle values for an even count.
inline double median(std::vector<double> samples) {
  if (samples.empty()) throw DomainError("median of no samples");
  const std::size_t mid = samples.size() / 2;
  std::nth_element(samples.begin(), samples.begin() + static_cast<std::ptrdiff_t>(mid), samples.end());
  const double upper = samples[mid];
  if (samples.size() % 2 == 1) return upper;
  const double lower = *std::max_element(samples.begin(), samples.begin() + static_cast<std::ptrdiff_t>(mid));
  return (lower + upper) / 2;
}

// ---------------------------------------------------------------------------
// External compile-and-run

struct ExternalJobSpec {
  std::string source_template;  // path of the annotated source
  std::string compile_cmd;      // `{src}` and `{out}` are substituted
  std::string run_cmd;          // `{out}` is substituted
  int repetitions = 5;
  double timeout_s = 600;
  // Matched against compiler diagnostics; a match means the transformation was rejected.
  std::string reject_pattern;
  std::string work_dir = ".";
};

namespace detail {

inline std::string substitute(std::string text, const std::string& key, const std::string& value) {
  for (std::size_t at = text.find(key); at != std::string::npos; at = text.find(key, at + value.size()))
    text.replace(at, key.size(), value);
  return text;
}

// Last floating-point token of the text.
inline std::optional<double> last_number(const std::string& text) {
  static const std::regex number(R"([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)");
  std::optional<double> last;
  for (std::sregex_iterator it(text.begin(), text.end(), number), end; it != end; ++it) {
    try {
      last = std::stod(it->str());
    } catch (const std::exception&) {
    }
  }
  return last;
}

}  // namespace detail

// Renders, compiles, and times one variant. `template_text` is the contents of
// job.source_template and `stem` names the generated files inside job.work_dir.
inline Outcome evaluate_external(const LoopNest& root, const Configuration& config, const ExternalJobSpec& job,
                                 const std::string& template_text, const std::string& stem) {
  namespace fs = std::filesystem;
  const std::string ext = fs::path(job.source_template).extension().string();
  const fs::path src = fs::path(job.work_dir) / (stem + (ext.empty() ? ".c" : ext));
  const fs::path out = fs::path(job.work_dir) / stem;
  {
    std::ofstream f(src, std::ios::binary);
    if (!f) throw Error("cannot write '" + src.string() + "'");
    f << render_pragmas(root, config, template_text);
  }

  std::string compile = detail::substitute(job.compile_cmd, "{src}", src.string());
  compile = detail::substitute(compile, "{out}", out.string());
  const CommandResult built = run_shell(compile, job.timeout_s);
  if (built.timed_out) return CompileFailure{"compiler timed out"};
  if (built.exit_code != 0) return CompileFailure{"compiler exit status " + std::to_string(built.exit_code)};
  if (!job.reject_pattern.empty()) {
    const std::regex reject(job.reject_pattern);
    if (std::regex_search(built.err, reject) || std::regex_search(built.out, reject))
      return CompileFailure{"transformation rejected"};
  }

  std::string run = detail::substitute(job.run_cmd, "{out}", out.string());
  run = detail::substitute(run, "{src}", src.string());
  std::vector<double> times;
  for (int rep = 0; rep < std::max(job.repetitions, 1); ++rep) {
    const CommandResult ran = run_shell(run, job.timeout_s);
    if (ran.timed_out) return RunFailure{"timeout"};
    if (ran.exit_code != 0) return RunFailure{"exit status " + std::to_string(ran.exit_code)};
    const auto t = detail::last_number(ran.out);
    if (!t) return RunFailure{"unparsable"};
    if (!(*t > 0)) return RunFailure{"non-positive time"};
    times.push_back(*t);
  }
  return Time{median(std::move(times))};
}

class ExternalEvaluator : public Evaluator {
 public:
  ExternalEvaluator(LoopNest root, ExternalJobSpec job)
      : root_(std::move(root)), job_(std::move(job)), template_text_(read_text_file(job_.source_template)) {
    std::filesystem::create_directories(job_.work_dir);
  }

  Outcome evaluate(const Configuration& config) override {
    const std::size_t n = counter_.fetch_add(1);
    return evaluate_external(root_, config, job_, template_text_, "variant_" + std::to_string(n));
  }

 private:
  LoopNest root_;
  ExternalJobSpec job_;
  std::string template_text_;
  std::atomic<std::size_t> counter_{0};
};

// ---------------------------------------------------------------------------
// Synthetic landscape

// Execution time is a pure function of (seed, configuration):
//
//   time = base_time * prod_i multiplier(step_i) * prod_{i<j} interaction(step_i, step_j)
//
// Multipliers and interactions are keyed by pragma signature; each step's
// multiplier also carries a small loop-dependent factor so the same pragma on
// different loops differs. A configuration fails to compile when a pack
// follows a tile of size >= pack_after_tile_threshold, or when its seeded hash
// falls below failure_rate.
struct SyntheticLandscape {
  std::uint64_t seed = 0;
  double base_time = 1.0;
  std::map<std::string, double> multipliers;
  // Keys are ordered pairs (a <= b) of signatures; missing pairs are 1.
  std::map<std::pair<std::string, std::string>, double> interactions;
  // Log-normal spread of signatures absent from the table and of the per-loop factor.
  double unknown_mu = 0.05;
  double unknown_sigma = 0.3;
  double loop_sigma = 0.1;
  double failure_rate = 0.1;
  int pack_after_tile_threshold = 128;  // 0 disables the rule
  // Simulated measurement cost: one compile plus `repetitions` runs.
  double compile_seconds = 1.0;
  int repetitions = 5;

  // Fills the tables for every signature the space can produce on its first
  // levels from a stream seeded with `seed`.
  static SyntheticLandscape generate(std::uint64_t seed, const SpaceParams& params, const LoopNest& nest) {
    SyntheticLandscape land;
    land.seed = seed;
    Rng rng = Rng::derive(seed, "landscape");
    std::vector<std::string> sigs;
    for (int s : params.tile_sizes) {
      for (bool p : params.peel_variants) sigs.push_back(pragma_signature(Tile{"", s, p}));
    }
    for (std::size_t k = 2; k <= 4; ++k) {
      for (std::size_t n = 0; n < detail::interchange_count(k, params); ++n)
        sigs.push_back(pragma_signature(Interchange{"", detail::nth_interchange(k, n, params)}));
    }
    sigs.push_back(pragma_signature(ParallelizeThread{}));
    sigs.push_back(pragma_signature(Unroll{"", std::nullopt}));
    for (int f : params.unroll_factors) sigs.push_back(pragma_signature(Unroll{"", f}));
    sigs.push_back(pragma_signature(Reverse{}));
    for (const auto& a : nest.arrays) sigs.push_back(pragma_signature(Pack{"", a}));

    for (const auto& s : sigs) land.multipliers[s] = std::exp(land.unknown_mu + land.unknown_sigma * rng.normal());
    for (std::size_t i = 0; i < sigs.size(); ++i) {
      for (std::size_t j = i; j < sigs.size(); ++j) {
        if (rng.uniform_real() < 0.3) land.interactions[ordered(sigs[i], sigs[j])] = std::exp(0.2 * rng.normal());
      }
    }
    // Guarantee both speedups and slowdowns exist.
    auto [lo, hi] = std::minmax_element(land.multipliers.begin(), land.multipliers.end(),
                                        [](const auto& a, const auto& b) { return a.second < b.second; });
    if (lo->second >= 1.0) lo->second = 0.8;
    if (hi->second <= 1.0) hi->second = 1.25;
    return land;
  }

  static std::pair<std::string, std::string> ordered(const std::string& a, const std::string& b) {
    return a <= b ? std::make_pair(a, b) : std::make_pair(b, a);
  }

  double multiplier(const Transformation& t) const {
    const std::string sig = pragma_signature(t);
    auto it = multipliers.find(sig);
    const double base =
        it != multipliers.end() ? it->second : std::exp(unknown_mu + unknown_sigma * hash_normal(seed, "sig:" + sig));
    return base * std::exp(loop_sigma * hash_normal(seed, "step:" + canonical_key(t)));
  }

  double interaction(const Transformation& a, const Transformation& b) const {
    auto it = interactions.find(ordered(pragma_signature(a), pragma_signature(b)));
    return it == interactions.end() ? 1.0 : it->second;
  }

  std::optional<std::string> failure(const Configuration& config) const {
    if (config.empty()) return std::nullopt;
    if (pack_after_tile_threshold > 0) {
      bool large_tile = false;
      for (const auto& step : config.steps) {
        if (const auto* t = std::get_if<Tile>(&step); t && t->size >= pack_after_tile_threshold) large_tile = true;
        if (large_tile && std::holds_alternative<Pack>(step)) return "pack after large tile";
      }
    }
    if (hash_unit(seed ^ 0xfa11ULL, canonical_key(config)) < failure_rate) return "rejected by seeded rule";
    return std::nullopt;
  }

  Outcome evaluate(const Configuration& config) const {
    if (auto why = failure(config)) return CompileFailure{*why};
    double t = base_time;
    for (std::size_t i = 0; i < config.steps.size(); ++i) {
      t *= multiplier(config.steps[i]);
      for (std::size_t j = i + 1; j < config.steps.size(); ++j) t *= interaction(config.steps[i], config.steps[j]);
    }
    return Time{t};
  }
};

class SyntheticEvaluator : public Evaluator {
 public:
  explicit SyntheticEvaluator(SyntheticLandscape landscape) : landscape_(std::move(landscape)) {}

  Outcome evaluate(const Configuration& config) override { return landscape_.evaluate(config); }

  std::optional<double> simulated_cost(const Outcome& o) const override {
    double cost = landscape_.compile_seconds;
    if (const auto* t = std::get_if<Time>(&o)) cost += landscape_.repetitions * t->seconds;
    return cost;
  }

  const SyntheticLandscape& landscape() const { return landscape_; }

 private:
  SyntheticLandscape landscape_;
};

// ---------------------------------------------------------------------------
// Cache

// Memoizes an evaluator by canonical configuration key. Lookups may run
// concurrently; an insertion takes the writer lock.
class CachedEvaluator : public Evaluator {
 public:
  struct Result {
    Outcome outcome;
    bool fresh = false;  // true when the inner evaluator ran
  };

  explicit CachedEvaluator(Evaluator& inner) : inner_(inner) {}

  Result evaluate_tracked(const Configuration& config) {
    const std::string key = canonical_key(config);
    if (auto hit = lookup(key)) return {*hit, false};
    ++inner_calls_;
    Outcome o = inner_.evaluate(config);
    std::unique_lock lock(mutex_);
    auto [it, inserted] = cache_.try_emplace(key, std::move(o));
    return {it->second, inserted};
  }

  Outcome evaluate(const Configuration& config) override { return evaluate_tracked(config).outcome; }

  std::optional<double> simulated_cost(const Outcome& o) const override { return inner_.simulated_cost(o); }

  std::optional<Outcome> lookup(const std::string& key) const {
    std::shared_lock lock(mutex_);
    auto it = cache_.find(key);
    if (it == cache_.end()) return std::nullopt;
    return it->second;
  }

  bool contains(const std::string& key) const { return lookup(key).has_value(); }

  std::size_t unique_count() const {
    std::shared_lock lock(mutex_);
    return cache_.size();
  }

  std::size_t inner_calls() const { return inner_calls_.load(); }

 private:
  Evaluator& inner_;
  mutable std::shared_mutex mutex_;
  std::unordered_map<std::string, Outcome> cache_;
  std::atomic<std::size_t> inner_calls_{0};
};

}  // namespace pmcts
