// lenslab - scenario configuration, experiment dispatch, artifacts
#pragma once

#include "lenslab/jet.hpp"
#include "lenslab/rigidity.hpp"
#include "lenslab/variation.hpp"

// The vendored single-header nlohmann/json lives at the include root.
#include <json.hpp>

namespace lenslab {

using Json = nlohmann::json;

struct NumericsConfig {
  double ode_tol = defaults::ode_tol;
  double event_tol = defaults::event_tol;            // pinned, validated
  double tangent_threshold = defaults::tangent_threshold;  // pinned, validated
  double t_max = 20.0;
  double eps_max = defaults::eps_max;
  double delta = 0.05;
  int chain_segments_max = defaults::chain_segments_max;
  double chain_rtol = defaults::chain_rtol;
};

struct ScenarioConfig {
  std::string metric_name = "minkowski_cylinder";
  std::map<std::string, double> metric_params;
  double collar_width = 0.15;
  std::string experiment;
  NumericsConfig numerics;
  std::uint64_t seed = 1;
  std::string output_dir = "out";
  Json experiment_params;  // per-experiment block, validated by the experiment
};

// Strict parse: unknown keys are config errors reported with a JSON pointer.
ScenarioConfig parse_config(const Json& j);
ScenarioConfig load_config_file(const std::string& path);

struct ExperimentResult {
  std::string name;
  std::string status;  // "ok" or "error"
  double wall_ms = 0.0;
  std::vector<std::string> artifacts;
  std::vector<std::string> failures;  // per-sample failure ledger
  Json details;
};

struct RunReport {
  std::vector<ExperimentResult> experiments;
  int exit_code = 0;
  Json to_json() const;
};

RunReport run_scenario(const ScenarioConfig& config);

struct SelftestItem {
  std::string name;
  bool pass = false;
  std::string detail;
};

// Exact-rational suites plus the fast numeric invariants; designed to finish
// well under a minute.
std::vector<SelftestItem> run_selftest();

// 17-significant-digit round-trip formatting used by every CSV/JSON artifact.
std::string format_g17(double v);

// Shared grid builders.
std::vector<TangentVec> appendix_b_starts(const CatalogScenario& cat, const Vec& p, const Vec& v,
                                          const std::vector<double>& eps_grid);
// Near-null cone over a boundary grid: directions e_t + (1 - tilt) * (mix of
// tangent and inward normal), tilts within cone_width of the light cone.
std::vector<TangentVec> near_null_cone_starts(const CatalogScenario& cat, int component,
                                              const std::vector<double>& t_grid,
                                              const std::vector<double>& angle_grid,
                                              const std::vector<double>& tilt_grid,
                                              double aim_angle, double t_max = 20.0);

}  // namespace lenslab
