// lenslab command line front end: scenario-driven experiments
#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

#include "lenslab/harness.hpp"

using namespace lenslab;

int main(int argc, char** argv) {
  CLI::App app{"lenslab - scattering and rigidity experiments on catalog spacetimes"};
  app.require_subcommand(0, 1);
  app.fallthrough();  // global flags may follow the experiment subcommand

  std::string config_path;
  std::string out_dir;
  std::int64_t seed_override = -1;
  app.add_option("--config", config_path, "scenario JSON file");
  app.add_option("--out", out_dir, "output directory (overrides config)");
  app.add_option("--seed", seed_override, "seed (overrides config)");

  std::vector<std::string> experiments = {
      "trace",        "scatter_table",        "convert_scattering", "recover_tau",
      "recover_jet",  "jet_linearity",        "timesep_grid",       "lightcone_id",
      "exterior_reconstruct", "verify_isometry", "selftest"};
  std::map<std::string, CLI::App*> subs;
  for (const auto& e : experiments) subs[e] = app.add_subcommand(e, "run the " + e + " experiment");

  CLI11_PARSE(app, argc, argv);

  try {
    ScenarioConfig config;
    if (!config_path.empty()) {
      config = load_config_file(config_path);
    } else {
      config.experiment = "selftest";
    }
    for (const auto& [name, sub] : subs)
      if (sub->parsed()) config.experiment = name;
    if (config.experiment.empty()) {
      std::cerr << "no experiment selected (subcommand or config)\n";
      return 2;
    }
    if (!out_dir.empty()) config.output_dir = out_dir;
    if (seed_override >= 0) config.seed = static_cast<std::uint64_t>(seed_override);

    RunReport report = run_scenario(config);
    for (const auto& e : report.experiments) {
      std::printf("%-22s %-6s %8.1f ms", e.name.c_str(), e.status.c_str(), e.wall_ms);
      if (!e.artifacts.empty()) std::printf("  -> %s", e.artifacts.front().c_str());
      std::printf("\n");
      for (const auto& f : e.failures) std::printf("    %s\n", f.c_str());
    }
    return report.exit_code;
  } catch (const Error& e) {
    std::cerr << e.what() << "\n";
    return e.kind() == ErrorKind::config ? 2 : 3;
  } catch (const std::exception& e) {
    std::cerr << "fatal: " << e.what() << "\n";
    return 3;
  }
}
