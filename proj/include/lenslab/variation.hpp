// lenslab - first variation of travel time and the interior/complete conversions
#pragma once

#include <functional>

#include "lenslab/scattering.hpp"

namespace lenslab {

// A one-parameter family of geodesic starts lambda -> (x(lambda), v(lambda)).
struct VariationFamily {
  std::function<GeodesicState(double)> starts;
  double lambda_step = defaults::lambda_step;
};

// Residual of 2 h tau' + h' tau = 2 g(y', gamma'(tau)) - 2 g(x', gamma'(0)) at
// lambda0, with the endpoint surface the first boundary crossing. Derivatives
// are 4th-order central stencils over the family grid.
double variation_residual(const ChartMetric& m, const DomainSpec& d, const VariationFamily& fam,
                          double lambda0, double t_max = 20.0);

struct VariationCheck {
  double residual = 0.0;
  double lhs = 0.0;
  double rhs = 0.0;
  double stencil_check = 0.0;  // Richardson gap between the h and 2h tau' stencils
};
VariationCheck variation_check(const ChartMetric& m, const DomainSpec& d,
                               const VariationFamily& fam, double lambda0, double t_max = 20.0);

// The delta rule for the step-1 iteration: half the minimum collar traversal
// time of inward normal geodesics over a boundary grid, floored at
// 1e-3 * t_max.
double default_delta(const CatalogScenario& cat, int boundary_component, int grid_count,
                     double t_max);

// Data oracles for the recovery algorithms: self-consistent oracles trace the
// true metric; table oracles answer from sampled data only.
using ScatteringOracle = std::function<ScatteringSample(const TangentVec&)>;

ScatteringOracle self_consistent_interior_oracle(const ChartMetric& m, const DomainSpec& d,
                                                 double t_max,
                                                 const ScatteringOptions& opts = {});
ScatteringOracle self_consistent_complete_oracle(const ChartMetric& m, const DomainSpec& d,
                                                 double t_max,
                                                 const ScatteringOptions& opts = {});
// Exact-key table lookup; throws ErrorKind::interpolation with the achieved
// key distance when the table is too sparse for the query.
ScatteringOracle table_oracle(const ScatteringTable& table, double key_tol = 1e-9);

struct TauRecovery {
  double tau = 0.0;
  TangentVec outbound;
  double h_prime = 0.0;  // family normalization diagnostic, -2 by construction
};

// Lightlike interior travel time from timelike interior scattering families
// (the exit-anchored construction with h'(0) = -2).
TauRecovery recover_lightlike_tau_interior(const ChartMetric& m, const DomainSpec& d,
                                           const ScatteringOracle& interior,
                                           const TangentVec& target,
                                           double lambda_step = defaults::lambda_step);

// Interior table from a complete table closed under the flow: group by final
// exit, order by remaining tau (equivalently ell), subtract the predecessor.
ScatteringTable recover_interior_from_complete(const ScatteringTable& complete_table);

struct CompleteRecoveryOptions {
  double t_max = 20.0;
  double delta = 0.05;            // certified per-step progress
  double probe_h0 = 4e-3;         // largest exterior approximant offset
  int probe_levels = 3;           // h0, h0/2, h0/4 with Richardson limit
  double probe_delta_in = 0.08;   // flow time into the collar for the aim point
  int anchors = defaults::exterior_anchor_count;
  double anchor_span = 0.08;      // exterior parameter of the farthest anchor
  double lambda_step = defaults::lambda_step;
  std::uint64_t seed = 2024;
  ScatteringOptions scattering;
};

struct CompleteRecovery {
  ScatteringSample sample;  // provenance "recovered_6_5"
  int iterations = 0;
  std::vector<double> step_advances;  // per-iteration parameter progress
};

// Two-step recovery of the complete travel-time datum of one inward state from
// interior scattering queries plus the collar metric. Step 1 walks the flow
// through the collar; step 2 recovers tau for lightlike inputs from exterior
// first-variation families.
CompleteRecovery recover_complete_from_interior(const ChartMetric& m, const DomainSpec& d,
                                                const ScatteringOracle& interior,
                                                const TangentVec& start,
                                                const CompleteRecoveryOptions& opts = {});

struct ExteriorTauRecovery {
  double tau = 0.0;
  double h_prime = 0.0;
  std::vector<double> anchor_raw;  // per-anchor full parameter, ordered far to near
};

// Step-2 of the conversion: lightlike complete travel time from the complete
// scattering relation plus the known exterior, via anchor slices behind the
// exit and h'(0) = -2 families at the entry.
ExteriorTauRecovery recover_tau_exterior(const ChartMetric& m, const DomainSpec& d,
                                         const ScatteringOracle& complete,
                                         const TangentVec& target,
                                         const CompleteRecoveryOptions& opts = {});

// |g^{ij} d_i tau d_j tau + 1| for a proper-time field to a fixed point,
// derivatives by central finite differences of the field.
double eikonal_residual(const ChartMetric& m, const std::function<double(const Vec&)>& tau_field,
                        const Vec& x, double fd_h = 1e-4);

}  // namespace lenslab
