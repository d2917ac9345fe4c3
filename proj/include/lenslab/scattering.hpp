// lenslab - interior and complete scattering relations and sampled tables
#pragma once

#include "lenslab/geodesic.hpp"

namespace lenslab {

enum class ScatteringKind { interior, complete };

struct ScatteringSample {
  TangentVec inbound;
  TangentVec outbound;
  double tau = 0.0;
  double length = 0.0;  // tau * |g(v,v)|^(1/2)
  ScatteringKind kind = ScatteringKind::interior;
  int event_count = 0;
  std::string provenance = "direct";
};

struct FailureRecord {
  TangentVec input;
  std::string reason;
};

struct GridMeta {
  std::string description;
  int boundary_points = 0;
  int directions = 0;
  double cone_width = defaults::cone_width;
};

struct ScatteringTable {
  ScatteringKind kind = ScatteringKind::interior;
  std::vector<ScatteringSample> samples;
  std::vector<FailureRecord> failures;
  GridMeta grid_meta;
};

struct ScatteringOptions {
  double t_max = 20.0;
  double tol = defaults::ode_tol;
};

ScatteringSample interior_scattering(const ChartMetric& m, const DomainSpec& d,
                                     const TangentVec& start, double t_max,
                                     const ScatteringOptions& opts = {});
ScatteringSample complete_scattering(const ChartMetric& m, const DomainSpec& d,
                                     const TangentVec& start, double t_max,
                                     const ScatteringOptions& opts = {});

// Complete trace bookkeeping used by the lens-data conversions: one sample per
// inward-or-tangential boundary state along the full flow, each mapped to the
// shared final exit.
std::vector<ScatteringSample> complete_flow_samples(const ChartMetric& m, const DomainSpec& d,
                                                    const TangentVec& start, double t_max,
                                                    const ScatteringOptions& opts = {});

ScatteringTable build_scattering_table(const ChartMetric& m, const DomainSpec& d,
                                       const std::vector<TangentVec>& starts, ScatteringKind kind,
                                       double t_max, const ScatteringOptions& opts = {});

// Appendix-B probe direction at a boundary point: sqrt(1 + eps^2) v + eps * n_in
// for Lorentzian charts (sqrt(1 - eps^2) in the Riemannian case).
Vec probe_direction(const ChartMetric& m, const DomainSpec& d, const Vec& p, const Vec& v,
                    double eps);

std::string table_to_csv(const ScatteringTable& table);

}  // namespace lenslab
