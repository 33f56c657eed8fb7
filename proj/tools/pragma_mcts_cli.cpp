// pragma-mcts: tune loop-transformation pragmas, report on result logs, and
// inspect the search space.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "pragma_mcts.hpp"

namespace {

void configure_logging() {
  auto logger = spdlog::stderr_color_mt("pragma-mcts");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%H:%M:%S.%e] [%^%l%$] %v");
  spdlog::set_level(spdlog::level::warn);
  if (const char* env = std::getenv("PRAGMA_MCTS_LOG")) {
    const auto level = spdlog::level::from_str(env);
    // from_str maps unknown names to off; only accept a real "off".
    if (level != spdlog::level::off || std::string(env) == "off") {
      spdlog::set_level(level);
    } else {
      spdlog::warn("ignoring unknown PRAGMA_MCTS_LOG level '{}'", env);
    }
  }
}

int tune(const std::string& config_path, const std::optional<std::string>& method, const std::optional<std::uint64_t>& seed,
         const std::optional<std::string>& out) {
  pmcts::ExperimentConfig config = pmcts::load_experiment_config(config_path);
  if (method) config.method = pmcts::parse_method(*method);
  if (seed) config.seed = *seed;
  if (out) config.output_dir = *out;
  spdlog::info("tuning {} with {} (seed {}, budget {} unique / {} s)", config.nest_path,
               pmcts::method_name(config.method), config.seed, config.budget.max_unique,
               config.budget.max_wall_clock_s);
  const auto summary = pmcts::run_experiment(config, [](const pmcts::EvalRecord& r) {
    spdlog::debug("#{} phase {} {} [{}] {} h={}", r.iteration, r.phase, r.stage, r.key,
                  pmcts::outcome_kind(r.outcome), r.h ? std::to_string(*r.h) : std::string("-"));
  });
  spdlog::info("best speedup {} after {} unique evaluations", summary.best_h, summary.unique_evaluations);
  std::cout << pmcts::summary_to_json(summary).dump(2) << '\n';
  return 0;
}

std::vector<pmcts::NamedLog> load_logs(const std::vector<std::string>& paths) {
  std::vector<pmcts::NamedLog> logs;
  for (const auto& p : paths)
    logs.push_back(pmcts::named_log(pmcts::load_log(p), std::filesystem::path(p).stem().string()));
  return logs;
}

// Nodes per depth with their child counts, by exhaustive enumeration.
int space_dump(const std::string& nest_path, int max_depth, const std::optional<std::string>& config_path) {
  pmcts::SpaceParams params;
  if (config_path) params = pmcts::load_experiment_config(*config_path).mcts.space;
  const pmcts::LoopNest nest = pmcts::load_loop_nest_file(nest_path);
  std::vector<pmcts::SpaceNode> level{pmcts::SpaceNode::root(nest)};
  std::cout << "depth\tnodes\tchildren_total\tchildren_min\tchildren_max\n";
  for (int d = 0; d <= max_depth && !level.empty(); ++d) {
    std::size_t total = 0;
    std::size_t lo = SIZE_MAX;
    std::size_t hi = 0;
    std::vector<pmcts::SpaceNode> next;
    for (const auto& node : level) {
      const std::size_t n = pmcts::child_count(node, params);
      total += n;
      lo = std::min(lo, n);
      hi = std::max(hi, n);
      if (d < max_depth) {
        for (std::size_t i = 0; i < n; ++i) next.push_back(pmcts::child(node, i, params));
      }
    }
    std::cout << d << '\t' << level.size() << '\t' << total << '\t' << lo << '\t' << hi << '\n';
    level = std::move(next);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  configure_logging();
  CLI::App app{"Autotune loop-transformation pragmas with Monte Carlo tree search."};
  app.require_subcommand(1);

  auto* tune_cmd = app.add_subcommand("tune", "run one search and write results.jsonl and summary.json");
  std::string config_path;
  std::optional<std::string> method;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  tune_cmd->add_option("--config", config_path, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  tune_cmd->add_option("--method", method, "mcts, rs, bf or gg (overrides the config)")
      ->check(CLI::IsMember({"mcts", "rs", "bf", "gg"}));
  tune_cmd->add_option("--seed", seed, "master seed (overrides the config)");
  tune_cmd->add_option("--out", out, "output directory (overrides the config)");

  auto* report_cmd = app.add_subcommand("report", "plot-ready tables from result logs");
  report_cmd->require_subcommand(1);
  std::vector<std::string> logs;
  double top = 0.05;
  auto* trajectory_cmd = report_cmd->add_subcommand("trajectory", "depth, speedup and target per evaluation");
  trajectory_cmd->add_option("--log", logs, "result log")->required()->check(CLI::ExistingFile);
  auto* cutoff_cmd = report_cmd->add_subcommand("cutoff", "per-method counts above the pooled top cutoff");
  cutoff_cmd->add_option("--log", logs, "result logs, one per method")->required()->check(CLI::ExistingFile);
  cutoff_cmd->add_option("--top", top, "top fraction defining the cutoff")->check(CLI::Range(1e-9, 1.0));
  auto* best_depth_cmd = report_cmd->add_subcommand("best-depth", "depth of each method's best configuration");
  best_depth_cmd->add_option("--log", logs, "result logs")->required()->check(CLI::ExistingFile);

  auto* space_cmd = app.add_subcommand("space", "inspect the search space");
  space_cmd->require_subcommand(1);
  auto* dump_cmd = space_cmd->add_subcommand("dump", "child counts per depth");
  std::string nest_path;
  int max_depth = 2;
  std::optional<std::string> space_config;
  dump_cmd->add_option("--nest", nest_path, "loop nest (JSON)")->required()->check(CLI::ExistingFile);
  dump_cmd->add_option("--max-depth", max_depth, "deepest level to enumerate")->check(CLI::Range(0, 6));
  dump_cmd->add_option("--config", space_config, "take space parameters from this experiment config")
      ->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*tune_cmd) return tune(config_path, method, seed, out);
    if (*trajectory_cmd) {
      if (logs.size() != 1) throw pmcts::ConfigError("trajectory takes exactly one --log");
      std::cout << pmcts::emit_trajectory(pmcts::load_log(logs.front()));
      return 0;
    }
    if (*cutoff_cmd) {
      std::cout << pmcts::emit_cutoff_counts(load_logs(logs), top);
      return 0;
    }
    if (*best_depth_cmd) {
      std::cout << pmcts::emit_best_depth(load_logs(logs));
      return 0;
    }
    if (*dump_cmd) return space_dump(nest_path, max_depth, space_config);
  } catch (const pmcts::Error& e) {
    spdlog::error("{}", e.what());
    return 1;
  } catch (const std::exception& e) {
    spdlog::error("unexpected failure: {}", e.what());
    return 2;
  }
  return 0;
}
