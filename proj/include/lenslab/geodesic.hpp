// lenslab - geodesic integration, boundary events, shooting, Jacobi fields
#pragma once

#include <cstdint>
#include <optional>

#include "lenslab/metric.hpp"

namespace lenslab {

enum class Termination { reached_t_max, left_chart, event_stop };
enum class EventKind { enter, exit, tangential };

struct BoundaryEvent {
  double t = 0.0;
  Vec point;
  Vec velocity;
  EventKind kind = EventKind::exit;
  double transversality = 0.0;  // dphi(gamma') / |gamma'|
};

struct TraceSample {
  double t;
  Vec x;
  Vec v;
};

struct GeodesicState {
  Vec x;
  Vec v;
};

// One accepted integrator step with the 4th-order continuous extension.
struct DenseSegment {
  double t0 = 0.0;
  double h = 0.0;
  Vec r1, r2, r3, r4, r5;
  Vec eval(double t) const;
};

struct GeodesicTrace {
  std::vector<TraceSample> samples;
  double energy = 0.0;  // g(v,v) at start
  std::vector<BoundaryEvent> events;
  Termination termination = Termination::reached_t_max;
  double t_end = 0.0;
  int dimension = 0;
  std::vector<DenseSegment> segments;

  GeodesicState state_at(double t) const;
  const BoundaryEvent* first_event() const { return events.empty() ? nullptr : &events.front(); }
};

struct TraceOptions {
  double tol = defaults::ode_tol;
  int max_events = defaults::max_events;
  bool stop_at_first_event = false;
  // Stop once a transversal exit has been confirmed by the exit window
  // (trace keeps integrating through tangential grazes).
  bool stop_after_final_exit = false;
};

GeodesicTrace integrate_geodesic(const ChartMetric& m, const TangentVec& start, double t_max,
                                 double tol = defaults::ode_tol);
GeodesicTrace trace_through_domain(const ChartMetric& m, const DomainSpec& d,
                                   const TangentVec& start, double t_max,
                                   const TraceOptions& opts = {});

// exp_x(v) := gamma_{x,v}(1); shoot inverts it around an initial guess.
Vec exp_map(const ChartMetric& m, const Vec& x, const Vec& v, double tol = defaults::ode_tol);
TangentVec shoot(const ChartMetric& m, const Vec& x, const Vec& y, const Vec& v0,
                 std::optional<double> t_fixed = std::nullopt,
                 double shoot_tol = defaults::shoot_tol);

struct JacobiSolution {
  const GeodesicTrace* along = nullptr;
  std::vector<double> ts;
  std::vector<Vec> J;        // field values
  std::vector<Vec> J_prime;  // covariant derivative values
  std::optional<double> first_zero;
  Vec at(double t) const;
};

JacobiSolution jacobi_field(const ChartMetric& m, const GeodesicTrace& trace, const Vec& J0,
                            const Vec& J0_prime);
std::optional<double> first_conjugate_time(const ChartMetric& m, const GeodesicTrace& trace,
                                           double conj_tol = defaults::conj_tol);

TangentVec sample_transversal_perturbation(const ChartMetric& m, const DomainSpec& d, const Vec& x,
                                           const Vec& v, double cone_radius, std::uint64_t seed,
                                           double t_max = 10.0,
                                           int max_rejections = defaults::max_rejections);

}  // namespace lenslab
