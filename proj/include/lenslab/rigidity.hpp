// lenslab - time separation fields, cut locus probing, exterior reconstruction,
// boundary light-cone identification, isometry construction and verification
#pragma once

#include "lenslab/scattering.hpp"

namespace lenslab {

enum class TimesepMethod { shooting, chain };

struct ChainParams {
  int segments_init = defaults::chain_segments_init;
  int segments_max = defaults::chain_segments_max;
  double rtol = defaults::chain_rtol;
  int ascent_iters = 160;
};

// Evaluates the time separation function d(x, y) of a catalog scenario.
// shooting: maximum over causal geodesics found by multistart shooting (valid
// when no cut point intervenes and maximizers are geodesics).
// chain: piecewise-geodesic causal-path optimizer with nodes confined to
// phi >= 0; always a valid lower bound for d.
class TimeSeparationField {
public:
  TimeSeparationField(const CatalogScenario& cat, TimesepMethod method,
                      ChainParams chain = ChainParams{});

  double operator()(const Vec& x, const Vec& y) const;
  // Lower-level entry exposing whether the optimizer stalled (chain value is
  // then still a valid lower bound).
  double evaluate(const Vec& x, const Vec& y, bool* stalled = nullptr) const;

  const ChartMetric& metric() const { return *metric_; }
  const DomainSpec& domain() const { return *domain_; }
  TimesepMethod method() const { return method_; }
  const std::vector<std::pair<int, double>>& periods() const { return periods_; }

private:
  const ChartMetric* metric_;
  const DomainSpec* domain_;
  std::vector<std::pair<int, double>> periods_;
  TimesepMethod method_;
  ChainParams chain_;

  double shooting_d(const Vec& x, const Vec& y) const;
  double chain_d(const Vec& x, const Vec& y, bool* stalled) const;
};

enum class CausalRelation { chronological, null_boundary, non_causal };

CausalRelation causal_boundary_class(const TimeSeparationField& field, const Vec& x, const Vec& y,
                                     double tol = 1e-6);

enum class CutWitness { conjugate_point, second_geodesic, none_within_budget };

struct CutLocusProbe {
  TangentVec start;
  double rho = 0.0;  // +inf encoded as 1e30 when no cut within budget
  CutWitness witness = CutWitness::none_within_budget;
  std::optional<double> conjugate_time;
  std::optional<Vec> second_geodesic;  // distinct initial velocity reaching the cut point
};

CutLocusProbe cut_locus_probe(const TimeSeparationField& field, const TangentVec& start,
                              double budget);

struct NullDirectionRecovery {
  Vec u;  // at z1, exp_{z1}(u) = y
  Vec w;  // at y, the velocity of that unit-parameter geodesic
  double d_last = 0.0;
};

// The gradient trick: u_j = -d(z1,y_j) grad_1 d(.,y_j)|_{z1},
// v_j = d(z1,y_j) grad_2 d(z1,.)|_{y_j}; signs fixed by the exp roundtrip and
// limits taken along the approach sequence.
NullDirectionRecovery recover_null_direction_via_gradient(const TimeSeparationField& field,
                                                          const Vec& z1, const Vec& y,
                                                          const std::vector<Vec>& approach_seq,
                                                          double fd_h = 1e-4);

struct DiskObstacle {
  double cx = 0.0, cy = 0.0, r = 0.5;
};

struct ExteriorDatum {
  TangentVec entry;
  TangentVec exit;
  double total_parameter = 0.0;
  int advances = 0;  // gradient-trick jumps across the unknown region
  double i0_estimate = 0.0;
};

// Desk-scale run of the exterior reconstruction loop: the metric is known on
// K^c only (K a union of spatial disks inside the chart disk of radius R_M);
// travel time data across K is recovered from the time separation field via
// cone intersections and the gradient trick.
ExteriorDatum exterior_lightlike_traveltime(const TimeSeparationField& field,
                                            const std::vector<DiskObstacle>& obstacles,
                                            double R_M, const TangentVec& start,
                                            double t_max = 10.0);

struct LightconePoint {
  int i = 0, j = 0;
  Vec point;
};

// Grid subset of the boundary of {d(x,.) > tol} with dtilde(x,.) <= tol:
// the trace of null geodesics from x on the boundary.
std::vector<LightconePoint> boundary_lightcone_id(
    const TimeSeparationField& d_field, const TimeSeparationField& d_ext, const Vec& x,
    const std::vector<double>& t_grid, const std::vector<double>& theta_grid,
    const CatalogScenario& cat, double tol = 1e-6, bool theta_periodic = true);

struct ExteriorMap {
  std::function<Vec(const Vec&)> map;
  std::function<Mat(const Vec&)> differential;
};

struct IsometrySample {
  Vec x;
  Vec phi_x;
  double t_exit = 0.0;  // backward first-exit parameter used in the construction
};

struct IsometryCandidate {
  std::vector<IsometrySample> samples;
  double max_direction_discrepancy = 0.0;
  double max_pullback_error = -1.0;  // filled by verify_isometry
};

// phi(x) = exp^{g2}_{phi0(y)}(t(x,v) dphi0 w) with (y, w, t) the backward
// first exit of the null direction v at x. The two tables must already match
// under phi0.
IsometryCandidate construct_isometry(const CatalogScenario& m1, const CatalogScenario& m2,
                                     const ExteriorMap& phi0, const ScatteringTable& data1,
                                     const ScatteringTable& data2,
                                     const std::vector<Vec>& interior_samples,
                                     double iso_tol = 1e-4);

// Maps a single interior point through the lens construction.
Vec isometry_map_point(const CatalogScenario& m1, const CatalogScenario& m2,
                       const ExteriorMap& phi0, const Vec& x, const Vec& null_dir,
                       double* t_exit = nullptr);

double verify_isometry(IsometryCandidate& candidate, const CatalogScenario& m1,
                       const CatalogScenario& m2, const std::function<Vec(const Vec&)>& rebuild,
                       double fd_h = 1e-4);

}  // namespace lenslab
