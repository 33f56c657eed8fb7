#pragma once

// Experiment configuration, result logs, and plot-ready reports.
//
// Config file (JSON, "schema": 1):
//
//   {
//     "schema": 1,
//     "nest": "nest.json",                  // relative to the config file
//     "evaluator": {"kind": "synthetic"}    // optional "seed"; default derives from the master seed
//               | {"kind": "external", "source_template": "...", "compile": "...",
//                  "run": "...", "repetitions": 5, "timeout_s": 600,
//                  "reject_pattern": "...", "work_dir": "..."},
//     "method": "mcts",                     // mcts | rs | bf | gg
//     "seed": 1,
//     "budget": {"max_unique": 1000, "max_wall_clock_s": 21600},
//     "space": {"tile_sizes": [...], "unroll_factors": [...], "peel": [false, true],
//               "d_max": 5, "max_full_permutation_depth": 4},
//     "mcts": {"c": 0.1, "per_run_budget": 300, "n_walks": 10, "no_improve_limit": 50,
//              "same_config_limit": 10, "max_phase_iterations": 3000, "max_idle_phases": 100},
//     "reward": {"m": 10, "r_penalty": -1, "alpha": 0.05, "target": "running_max"},
//     "random_search": {"max_consecutive_repeats": 10000},
//     "output_dir": "out",
//     "jobs": 1
//   }
//
// Every key except "nest" is optional.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pragma_mcts/baselines.hpp"
#include "pragma_mcts/error.hpp"
#include "pragma_mcts/eval.hpp"
#include "pragma_mcts/loop_model.hpp"
#include "pragma_mcts/mcts.hpp"
#include "pragma_mcts/reward.hpp"
#include "pragma_mcts/rng.hpp"
#include "pragma_mcts/session.hpp"

namespace pmcts {

inline constexpr int kConfigSchema = 1;

enum class Method { kMcts, kRandomSearch, kBreadthFirst, kGlobalGreedy };

inline std::string_view method_name(Method m) {
  switch (m) {
    case Method::kMcts: return "mcts";
    case Method::kRandomSearch: return "rs";
    case Method::kBreadthFirst: return "bf";
    case Method::kGlobalGreedy: return "gg";
  }
  return "?";
}

inline Method parse_method(std::string_view s) {
  if (s == "mcts") return Method::kMcts;
  if (s == "rs") return Method::kRandomSearch;
  if (s == "bf") return Method::kBreadthFirst;
  if (s == "gg") return Method::kGlobalGreedy;
  throw ConfigError("unknown method '" + std::string(s) + "' (expected mcts, rs, bf or gg)");
}

struct ExperimentConfig {
  std::string nest_path;
  bool synthetic = true;
  std::optional<std::uint64_t> landscape_seed;
  ExternalJobSpec external;
  Method method = Method::kMcts;
  std::uint64_t seed = 1;
  Budget budget;
  MctsParams mcts;
  std::size_t rs_max_consecutive_repeats = 10000;
  std::string output_dir = "out";
  std::size_t jobs = 1;
};

namespace detail {

inline void reject_unknown(const nlohmann::json& j, const std::string& where, std::set<std::string> known) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [k, v] : j.items()) {
    if (!known.count(k)) throw ConfigError("unknown key '" + k + "' in " + where);
  }
}

template <typename T>
void read(const nlohmann::json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("bad value for '" + std::string(key) + "' in " + where);
  }
}

inline std::string resolve(const std::filesystem::path& base, const std::string& p) {
  if (p.empty()) return p;
  const std::filesystem::path path(p);
  return path.is_absolute() ? p : (base / path).lexically_normal().string();
}

}  // namespace detail

// `base_dir` anchors relative paths in the document.
inline ExperimentConfig parse_experiment_config(std::string_view text, const std::filesystem::path& base_dir = ".") {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  detail::reject_unknown(j, "config",
                         {"schema", "nest", "evaluator", "method", "seed", "budget", "space", "mcts", "reward",
                          "random_search", "output_dir", "jobs"});
  int schema = kConfigSchema;
  detail::read(j, "schema", schema, "config");
  if (schema != kConfigSchema) throw ConfigError("unsupported config schema " + std::to_string(schema));

  ExperimentConfig c;
  if (!j.contains("nest") || !j["nest"].is_string()) throw ConfigError("config needs a \"nest\" path");
  c.nest_path = detail::resolve(base_dir, j["nest"].get<std::string>());

  if (j.contains("evaluator")) {
    const auto& e = j["evaluator"];
    detail::reject_unknown(e, "evaluator",
                           {"kind", "seed", "source_template", "compile", "run", "repetitions", "timeout_s",
                            "reject_pattern", "work_dir"});
    std::string kind = "synthetic";
    detail::read(e, "kind", kind, "evaluator");
    if (kind == "synthetic") {
      if (e.contains("seed")) {
        std::uint64_t s = 0;
        detail::read(e, "seed", s, "evaluator");
        c.landscape_seed = s;
      }
    } else if (kind == "external") {
      c.synthetic = false;
      detail::read(e, "source_template", c.external.source_template, "evaluator");
      detail::read(e, "compile", c.external.compile_cmd, "evaluator");
      detail::read(e, "run", c.external.run_cmd, "evaluator");
      detail::read(e, "repetitions", c.external.repetitions, "evaluator");
      detail::read(e, "timeout_s", c.external.timeout_s, "evaluator");
      detail::read(e, "reject_pattern", c.external.reject_pattern, "evaluator");
      detail::read(e, "work_dir", c.external.work_dir, "evaluator");
      if (c.external.source_template.empty() || c.external.compile_cmd.empty() || c.external.run_cmd.empty())
        throw ConfigError("external evaluator needs source_template, compile and run");
      if (c.external.repetitions < 1) throw ConfigError("repetitions must be at least 1");
      if (!(c.external.timeout_s > 0)) throw ConfigError("timeout_s must be positive");
      c.external.source_template = detail::resolve(base_dir, c.external.source_template);
    } else {
      throw ConfigError("unknown evaluator kind '" + kind + "'");
    }
  }

  if (j.contains("method")) {
    if (!j["method"].is_string()) throw ConfigError("method must be a string");
    c.method = parse_method(j["method"].get<std::string>());
  }
  detail::read(j, "seed", c.seed, "config");

  if (j.contains("budget")) {
    const auto& b = j["budget"];
    detail::reject_unknown(b, "budget", {"max_unique", "max_wall_clock_s"});
    detail::read(b, "max_unique", c.budget.max_unique, "budget");
    detail::read(b, "max_wall_clock_s", c.budget.max_wall_clock_s, "budget");
    if (!(c.budget.max_wall_clock_s > 0)) throw ConfigError("max_wall_clock_s must be positive");
  }

  auto& sp = c.mcts.space;
  if (j.contains("space")) {
    const auto& s = j["space"];
    detail::reject_unknown(s, "space", {"tile_sizes", "unroll_factors", "peel", "d_max", "max_full_permutation_depth"});
    detail::read(s, "tile_sizes", sp.tile_sizes, "space");
    detail::read(s, "unroll_factors", sp.unroll_factors, "space");
    detail::read(s, "peel", sp.peel_variants, "space");
    detail::read(s, "d_max", sp.d_max, "space");
    detail::read(s, "max_full_permutation_depth", sp.max_full_permutation_depth, "space");
    for (int t : sp.tile_sizes) {
      if (t < 1) throw ConfigError("tile sizes must be positive");
    }
    for (int f : sp.unroll_factors) {
      if (f < 2) throw ConfigError("unroll factors must be at least 2");
    }
    if (sp.d_max < 1) throw ConfigError("d_max must be at least 1");
  }

  if (j.contains("mcts")) {
    const auto& m = j["mcts"];
    detail::reject_unknown(m, "mcts",
                           {"c", "per_run_budget", "n_walks", "no_improve_limit", "same_config_limit",
                            "max_phase_iterations", "max_idle_phases"});
    detail::read(m, "c", c.mcts.c, "mcts");
    detail::read(m, "per_run_budget", c.mcts.per_run_budget, "mcts");
    detail::read(m, "n_walks", c.mcts.n_walks, "mcts");
    detail::read(m, "no_improve_limit", c.mcts.no_improve_limit, "mcts");
    detail::read(m, "same_config_limit", c.mcts.same_config_limit, "mcts");
    detail::read(m, "max_phase_iterations", c.mcts.max_phase_iterations, "mcts");
    detail::read(m, "max_idle_phases", c.mcts.max_idle_phases, "mcts");
    if (c.mcts.c < 0) throw ConfigError("c must be non-negative");
  }

  if (j.contains("reward")) {
    const auto& r = j["reward"];
    detail::reject_unknown(r, "reward", {"m", "r_penalty", "alpha", "target"});
    detail::read(r, "m", c.mcts.reward.m, "reward");
    detail::read(r, "r_penalty", c.mcts.reward.r_penalty, "reward");
    detail::read(r, "alpha", c.mcts.reward.alpha, "reward");
    std::string target = "running_max";
    detail::read(r, "target", target, "reward");
    if (target == "running_max") {
      c.mcts.reward.rule = TargetRule::kRunningMax;
    } else if (target == "moving_average") {
      c.mcts.reward.rule = TargetRule::kMovingAverage;
    } else {
      throw ConfigError("unknown target rule '" + target + "'");
    }
    if (c.mcts.reward.m < 1) throw ConfigError("m must be at least 1");
    if (!(c.mcts.reward.alpha > 0 && c.mcts.reward.alpha < 0.5)) throw ConfigError("alpha must be in (0, 0.5)");
  }

  if (j.contains("random_search")) {
    const auto& r = j["random_search"];
    detail::reject_unknown(r, "random_search", {"max_consecutive_repeats"});
    detail::read(r, "max_consecutive_repeats", c.rs_max_consecutive_repeats, "random_search");
  }

  detail::read(j, "output_dir", c.output_dir, "config");
  c.output_dir = detail::resolve(base_dir, c.output_dir);
  detail::read(j, "jobs", c.jobs, "config");
  if (c.jobs < 1) throw ConfigError("jobs must be at least 1");
  return c;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  const auto base = std::filesystem::path(path).parent_path();
  return parse_experiment_config(read_text_file(path), base.empty() ? "." : base);
}

// ---------------------------------------------------------------------------
// Result log

inline nlohmann::json record_to_json(const EvalRecord& r) {
  nlohmann::json j;
  j["iteration"] = r.iteration;
  j["phase"] = r.phase;
  j["method"] = r.method;
  j["stage"] = r.stage;
  j["key"] = r.key;
  j["depth"] = r.depth();
  j["pragmas"] = r.pragmas;
  j["outcome"] = std::string(outcome_kind(r.outcome));
  if (const auto t = seconds_of(r.outcome)) {
    j["seconds"] = *t;
  } else if (const auto* f = std::get_if<CompileFailure>(&r.outcome)) {
    j["reason"] = f->reason;
  } else if (const auto* f = std::get_if<RunFailure>(&r.outcome)) {
    j["reason"] = f->reason;
  }
  j["h"] = r.h ? nlohmann::json(*r.h) : nlohmann::json(nullptr);
  j["best_so_far_h"] = r.best_so_far_h;
  j["target_f"] = r.target_f ? nlohmann::json(*r.target_f) : nlohmann::json(nullptr);
  j["wall_clock_s"] = r.wall_clock_s;
  return j;
}

// A persisted record as read back from a log.
struct LogRow {
  std::size_t iteration = 0;
  int phase = 0;
  std::string method;
  std::string stage;
  std::string key;
  std::size_t depth = 0;
  std::string outcome;
  std::optional<double> h;
  double best_so_far_h = 1.0;
  std::optional<double> target_f;
  double wall_clock_s = 0;
};

inline LogRow row_from_json(const nlohmann::json& j) {
  LogRow r;
  try {
    r.iteration = j.at("iteration").get<std::size_t>();
    r.phase = j.at("phase").get<int>();
    r.method = j.at("method").get<std::string>();
    r.stage = j.value("stage", "");
    r.key = j.at("key").get<std::string>();
    r.depth = j.at("depth").get<std::size_t>();
    r.outcome = j.at("outcome").get<std::string>();
    if (j.contains("h") && !j["h"].is_null()) r.h = j["h"].get<double>();
    r.best_so_far_h = j.at("best_so_far_h").get<double>();
    if (j.contains("target_f") && !j["target_f"].is_null()) r.target_f = j["target_f"].get<double>();
    r.wall_clock_s = j.value("wall_clock_s", 0.0);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed log record: ") + e.what());
  }
  return r;
}

inline LogRow row_from_record(const EvalRecord& rec) { return row_from_json(record_to_json(rec)); }

inline std::vector<LogRow> parse_log(std::string_view text) {
  std::vector<LogRow> rows;
  std::istringstream in{std::string(text)};
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      rows.push_back(row_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError("log line " + std::to_string(n) + ": " + e.what());
    }
  }
  return rows;
}

inline std::vector<LogRow> load_log(const std::string& path) { return parse_log(read_text_file(path)); }

// ---------------------------------------------------------------------------
// Experiment

struct ExperimentSummary {
  std::string method;
  std::uint64_t seed = 0;
  std::size_t unique_evaluations = 0;
  double best_h = 1.0;
  std::string best_key;
  std::vector<std::string> best_pragmas;
  std::size_t best_depth = 0;
  double wall_clock_s = 0;
  std::size_t phases = 0;
  double root_seconds = 0;
};

inline nlohmann::json summary_to_json(const ExperimentSummary& s) {
  return {{"method", s.method},
          {"seed", s.seed},
          {"unique_evaluations", s.unique_evaluations},
          {"best_h", s.best_h},
          {"best_key", s.best_key},
          {"best_pragmas", s.best_pragmas},
          {"best_depth", s.best_depth},
          {"wall_clock_s", s.wall_clock_s},
          {"phases", s.phases},
          {"root_seconds", s.root_seconds}};
}

// Independent random streams derived from the master seed.
struct SeedStreams {
  std::uint64_t landscape;
  Rng walks;
  Rng expansion;
  Rng random_search;

  explicit SeedStreams(std::uint64_t master)
      : landscape(Rng::derive(master, "landscape")()),
        walks(Rng::derive(master, "walks")),
        expansion(Rng::derive(master, "expansion")),
        random_search(Rng::derive(master, "random_search")) {}
};

inline std::unique_ptr<Evaluator> make_evaluator(const ExperimentConfig& config, const LoopNest& nest) {
  if (!config.synthetic) return std::make_unique<ExternalEvaluator>(nest, config.external);
  const std::uint64_t seed = config.landscape_seed ? *config.landscape_seed : SeedStreams(config.seed).landscape;
  return std::make_unique<SyntheticEvaluator>(SyntheticLandscape::generate(seed, config.mcts.space, nest));
}

// Runs one search in a prepared session and summarizes it.
inline ExperimentSummary run_search(const ExperimentConfig& config, SearchSession& session) {
  SeedStreams streams(config.seed);
  ExperimentSummary s;
  switch (config.method) {
    case Method::kMcts: {
      const MctsResult result = run_mcts(config.mcts, session, streams.walks, streams.expansion);
      s.phases = result.phases.size();
      break;
    }
    case Method::kRandomSearch:
      random_search(session, {config.mcts.space, config.rs_max_consecutive_repeats}, streams.random_search);
      break;
    case Method::kBreadthFirst:
      breadth_first(session, config.mcts.space);
      break;
    case Method::kGlobalGreedy:
      global_greedy(session, config.mcts.space);
      break;
  }
  const EvalRecord& best = session.best();
  s.method = std::string(method_name(config.method));
  s.seed = config.seed;
  s.unique_evaluations = session.unique_count();
  s.best_h = best.h.value_or(1.0);
  s.best_key = best.key;
  s.best_pragmas = best.pragmas;
  s.best_depth = best.depth();
  s.wall_clock_s = session.elapsed();
  s.root_seconds = session.root_time();
  return s;
}

// Writes <output_dir>/results.jsonl as records are produced and
// <output_dir>/summary.json at the end. `observer` sees every record too.
inline ExperimentSummary run_experiment(const ExperimentConfig& config, RecordSink observer = {}) {
  const LoopNest nest = load_loop_nest_file(config.nest_path);
  auto evaluator = make_evaluator(config, nest);
  std::filesystem::create_directories(config.output_dir);
  const auto dir = std::filesystem::path(config.output_dir);
  std::ofstream log(dir / "results.jsonl", std::ios::trunc);
  if (!log) throw Error("cannot write " + (dir / "results.jsonl").string());
  RecordSink sink = [&log, &observer](const EvalRecord& r) {
    log << record_to_json(r).dump() << '\n' << std::flush;
    if (observer) observer(r);
  };
  SearchSession session(nest, *evaluator, config.budget, std::string(method_name(config.method)), sink, config.jobs);
  const ExperimentSummary s = run_search(config, session);
  std::ofstream out(dir / "summary.json", std::ios::trunc);
  out << summary_to_json(s).dump(2) << '\n';
  return s;
}

// ---------------------------------------------------------------------------
// Reports

namespace detail {

inline std::string fmt(std::optional<double> v) {
  if (!v) return "NA";
  std::ostringstream os;
  os << std::setprecision(10) << *v;
  return os.str();
}

}  // namespace detail

// One row per record: index, depth, h, best-so-far, target, phase, stage, and
// a 1 in `boundary` on the first row of each phase.
inline std::string emit_trajectory(const std::vector<LogRow>& log) {
  std::ostringstream os;
  os << "evaluation\tdepth\th\tbest_so_far_h\ttarget_f\tphase\tstage\tboundary\n";
  std::optional<int> previous;
  for (const auto& r : log) {
    const bool boundary = !previous || *previous != r.phase;
    previous = r.phase;
    os << r.iteration << '\t' << r.depth << '\t' << detail::fmt(r.h) << '\t' << detail::fmt(r.best_so_far_h) << '\t'
       << detail::fmt(r.target_f) << '\t' << r.phase << '\t' << r.stage << '\t' << (boundary ? 1 : 0) << '\n';
  }
  return os.str();
}

struct NamedLog {
  std::string method;
  std::vector<LogRow> rows;
};

struct CutoffPoint {
  std::string method;
  std::size_t evaluation = 0;
  std::size_t count = 0;
};

struct CutoffTable {
  std::optional<double> cutoff;  // absent when no record succeeded
  std::vector<CutoffPoint> points;
};

// Pools successful non-root speedups across logs, takes the top `fraction`
// cutoff by nearest rank, and counts per log the records at or above it.
inline CutoffTable cutoff_counts(const std::vector<NamedLog>& logs, double fraction = 0.05) {
  std::vector<double> pool;
  for (const auto& log : logs) {
    for (const auto& r : log.rows) {
      if (r.h && r.stage != "root") pool.push_back(*r.h);
    }
  }
  CutoffTable table;
  if (pool.empty()) return table;
  table.cutoff = upper_quantile(pool, fraction);
  for (const auto& log : logs) {
    std::size_t count = 0;
    for (const auto& r : log.rows) {
      if (r.stage == "root") continue;
      if (r.h && *r.h >= *table.cutoff) ++count;
      table.points.push_back({log.method, r.iteration, count});
    }
  }
  return table;
}

inline std::string emit_cutoff_counts(const std::vector<NamedLog>& logs, double fraction = 0.05) {
  const CutoffTable t = cutoff_counts(logs, fraction);
  std::ostringstream os;
  os << "# cutoff " << detail::fmt(t.cutoff) << '\n';
  os << "method\tevaluation\tcount\n";
  for (const auto& p : t.points) os << p.method << '\t' << p.evaluation << '\t' << p.count << '\n';
  return os.str();
}

struct BestDepth {
  std::string method;
  double h = 1.0;
  std::size_t depth = 0;
  std::string key;
};

// The highest-speedup record of a log; the earliest wins ties.
inline std::optional<BestDepth> best_depth(const NamedLog& log) {
  const LogRow* best = nullptr;
  for (const auto& r : log.rows) {
    if (r.h && (!best || *r.h > *best->h)) best = &r;
  }
  if (!best) return std::nullopt;
  return BestDepth{log.method, *best->h, best->depth, best->key};
}

inline std::string emit_best_depth(const std::vector<NamedLog>& logs) {
  std::ostringstream os;
  os << "method\tbest_h\tdepth\tkey\n";
  for (const auto& log : logs) {
    if (const auto b = best_depth(log)) {
      os << b->method << '\t' << detail::fmt(b->h) << '\t' << b->depth << '\t' << b->key << '\n';
    } else {
      os << log.method << "\tNA\tNA\t\n";
    }
  }
  return os.str();
}

// Names a log by its records' method, falling back to `fallback`.
inline NamedLog named_log(std::vector<LogRow> rows, std::string fallback) {
  std::string name = rows.empty() ? std::move(fallback) : rows.front().method;
  return {std::move(name), std::move(rows)};
}

}  // namespace pmcts
