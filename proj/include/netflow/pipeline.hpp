#pragma once

// Staged command pipeline over an output directory:
//
//   simulate  -> panel_flows.csv, panel_occupancy.csv, truth_rates.csv, truth_components.csv
//   filter    -> filtered.csv, filter_states.csv, filter_edges.csv
//   smooth    -> smoothed.csv, smoothed_states.csv, transitions.csv
//   gravity   -> gravity.csv, credible.csv
//   evaluate  -> forecasts.csv, scores.csv, scores_summary.csv
//   report    -> report_trajectories.csv, report_dgm.csv, report_mape.csv
//
// Every stage writes manifest_<stage>.json recording the config hash, input
// hash and output file hashes. Downstream stages refuse to run unless the
// upstream manifest exists and matches the current config and input.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "netflow/network.hpp"
#include "netflow/simulate.hpp"

namespace netflow {

enum class Stage { simulate, filter, smooth, gravity, evaluate, report };

std::string_view stage_name(Stage stage);
std::optional<Stage> parse_stage(std::string_view name);

struct RunConfig {
  NetworkModelConfig model;
  std::size_t samples = 250;
  std::uint64_t seed = 1;
  int workers = 1;                           // not part of the config hash
  std::filesystem::path out = "netflow_out";  // not part of the config hash
  std::optional<int> nodes;
  std::optional<int> length;
  bool strict = false;
  double baseline_discount = 0.9;
  int score_start = 3;
  std::optional<std::filesystem::path> flows;
  std::optional<std::filesystem::path> occupancy;
  std::optional<ScenarioSpec> scenario;      // scenario.seed is replaced by seed
};

// Parses a JSON config; unknown keys and out-of-range values raise
// ConfigError. Relative paths are resolved against `base`.
RunConfig parse_config(std::string_view json_text, const std::filesystem::path& base = {});
RunConfig load_config(const std::filesystem::path& path);

// Canonical JSON of every setting that affects results (all defaults
// filled in; workers, out and input paths excluded).
std::string canonical_config(const RunConfig& cfg);

// Runs one stage, writing into cfg.out.
void run_stage(Stage stage, const RunConfig& cfg);

}  // namespace netflow
