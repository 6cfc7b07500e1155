#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "netflow/error.hpp"
#include "netflow/io.hpp"
#include "netflow/parallel.hpp"
#include "netflow/pipeline.hpp"

namespace {

int exit_code(const netflow::Error& e) {
  if (dynamic_cast<const netflow::NumericalError*>(&e)) return 3;
  if (dynamic_cast<const netflow::DependencyError*>(&e)) return 4;
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian dynamic models for count flows on networks"};
  app.require_subcommand(1, 1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::string out, flows, occupancy;
  app.add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "random seed (overrides config)");
  app.add_option("--workers", workers, "worker threads (default: NETFLOW_WORKERS, else 1)")->check(CLI::PositiveNumber);
  app.add_option("--out", out, "output directory (overrides config)");
  app.add_option("--flows", flows, "flow panel CSV (overrides config)");
  app.add_option("--occupancy", occupancy, "occupancy CSV (overrides config)");
  app.fallthrough();

  std::vector<netflow::Stage> stages;
  for (auto s : {netflow::Stage::simulate, netflow::Stage::filter, netflow::Stage::smooth, netflow::Stage::gravity,
                 netflow::Stage::evaluate, netflow::Stage::report}) {
    app.add_subcommand(std::string(netflow::stage_name(s)))->callback([&stages, s] { stages = {s}; });
  }
  app.add_subcommand("all", "filter, smooth, gravity, evaluate and report in order (simulate first if no panel is given)")
      ->callback([&] { stages = {netflow::Stage::filter, netflow::Stage::smooth, netflow::Stage::gravity,
                                 netflow::Stage::evaluate, netflow::Stage::report}; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    netflow::RunConfig cfg;
    bool workers_in_config = false;
    if (!config_path.empty()) {
      cfg = netflow::load_config(config_path);
      const auto j = nlohmann::json::parse(netflow::io::read_file(config_path), nullptr, false);
      workers_in_config = j.is_object() && j.contains("workers");
    }
    if (seed) cfg.seed = *seed;
    if (workers) cfg.workers = *workers;
    else if (!workers_in_config) cfg.workers = netflow::default_workers(cfg.workers);
    if (!out.empty()) cfg.out = out;
    if (!flows.empty()) cfg.flows = flows;
    if (!occupancy.empty()) cfg.occupancy = occupancy;
    if (cfg.occupancy && !cfg.flows) throw netflow::ConfigError("--occupancy needs --flows");

    if (app.got_subcommand("all") && !cfg.flows) stages.insert(stages.begin(), netflow::Stage::simulate);
    for (auto s : stages) {
      netflow::run_stage(s, cfg);
      std::cerr << netflow::stage_name(s) << ": wrote " << cfg.out.string() << "\n";
    }
  } catch (const netflow::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
