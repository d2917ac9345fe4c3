// lenslab - scattering relations from traced geodesics
#include "lenslab/scattering.hpp"

#include <cmath>
#include <sstream>

namespace lenslab {

namespace {

double transversality_of(const DomainSpec& d, const Vec& x, const Vec& v) {
  return d.dphi(x).dot(v) / v.norm();
}

ScatteringSample make_sample(const ChartMetric& m, const TangentVec& start,
                             const BoundaryEvent& ev, ScatteringKind kind, int event_count) {
  ScatteringSample s;
  s.inbound = start;
  s.outbound = {ev.point, ev.velocity, std::nullopt};
  if (m.signature == SignatureKind::lorentzian) {
    s.inbound.causal_class = m.classify(start.base, start.vec);
    s.outbound.causal_class = m.classify(ev.point, ev.velocity);
  }
  s.tau = ev.t;
  double q = m.inner(start.base, start.vec, start.vec);
  s.length = s.tau * std::sqrt(std::abs(q));
  s.kind = kind;
  s.event_count = event_count;
  return s;
}

void check_start(const ChartMetric& m, const DomainSpec& d, const TangentVec& start,
                 bool allow_tangential) {
  if (std::abs(d.phi(start.base)) > 1e-6)
    fail(ErrorKind::precondition, "scattering: start is not on the boundary");
  double tr = transversality_of(d, start.base, start.vec);
  if (tr < -defaults::tangent_threshold)
    fail(ErrorKind::precondition, "scattering: start points outward");
  if (!allow_tangential && std::abs(tr) <= defaults::tangent_threshold) {
    // Tangential starts are admitted only when the geodesic immediately enters
    // the interior.
    GeodesicTrace probe = integrate_geodesic(m, start, defaults::probe_dt, defaults::ode_tol);
    if (d.phi(probe.state_at(defaults::probe_dt).x) <= 0.0)
      fail(ErrorKind::zero_measure,
           "interior_scattering: tangential start without immediate interior entry");
  }
}

}  // namespace

ScatteringSample interior_scattering(const ChartMetric& m, const DomainSpec& d,
                                     const TangentVec& start, double t_max,
                                     const ScatteringOptions& opts) {
  check_start(m, d, start, false);
  TraceOptions topts;
  topts.tol = opts.tol;
  topts.stop_at_first_event = true;
  GeodesicTrace tr = trace_through_domain(m, d, start, t_max, topts);
  if (tr.events.empty())
    fail(ErrorKind::non_terminating, "interior_scattering: no boundary event within t_max");
  return make_sample(m, start, tr.events.front(), ScatteringKind::interior, 1);
}

namespace {

struct CompleteTraceResult {
  GeodesicTrace trace;
  std::size_t final_exit_index = 0;  // index into trace.events
  bool immediate = false;            // tangential start that immediately leaves
};

CompleteTraceResult run_complete(const ChartMetric& m, const DomainSpec& d,
                                 const TangentVec& start, double t_max,
                                 const ScatteringOptions& opts) {
  CompleteTraceResult out;
  double tr0 = transversality_of(d, start.base, start.vec);
  if (std::abs(tr0) <= defaults::tangent_threshold) {
    GeodesicTrace probe = integrate_geodesic(m, start, defaults::probe_dt, opts.tol);
    if (d.phi(probe.state_at(defaults::probe_dt).x) < 0.0) {
      out.immediate = true;  // tau = 0: the geodesic leaves M at the start
      return out;
    }
  }
  TraceOptions topts;
  topts.tol = opts.tol;
  topts.stop_after_final_exit = true;
  out.trace = trace_through_domain(m, d, start, t_max, topts);
  if (out.trace.termination != Termination::event_stop) {
    // Accept a transversal exit followed by leaving the chart while outside.
    if (out.trace.termination == Termination::left_chart && !out.trace.events.empty() &&
        out.trace.events.back().kind == EventKind::exit &&
        d.phi(out.trace.samples.back().x) < 0.0) {
      out.final_exit_index = out.trace.events.size() - 1;
      return out;
    }
    fail(ErrorKind::non_terminating, "complete_scattering: no final exit within t_max");
  }
  for (std::size_t i = 0; i < out.trace.events.size(); ++i)
    if (out.trace.events[i].t == out.trace.t_end) out.final_exit_index = i;
  return out;
}

}  // namespace

ScatteringSample complete_scattering(const ChartMetric& m, const DomainSpec& d,
                                     const TangentVec& start, double t_max,
                                     const ScatteringOptions& opts) {
  check_start(m, d, start, true);
  CompleteTraceResult r = run_complete(m, d, start, t_max, opts);
  if (r.immediate) {
    ScatteringSample s;
    s.inbound = start;
    s.outbound = start;
    s.tau = 0.0;
    s.length = 0.0;
    s.kind = ScatteringKind::complete;
    s.event_count = 0;
    return s;
  }
  ScatteringSample s = make_sample(m, start, r.trace.events[r.final_exit_index],
                                   ScatteringKind::complete,
                                   static_cast<int>(r.final_exit_index) + 1);
  return s;
}

std::vector<ScatteringSample> complete_flow_samples(const ChartMetric& m, const DomainSpec& d,
                                                    const TangentVec& start, double t_max,
                                                    const ScatteringOptions& opts) {
  check_start(m, d, start, true);
  CompleteTraceResult r = run_complete(m, d, start, t_max, opts);
  std::vector<ScatteringSample> out;
  if (r.immediate) return out;

  const BoundaryEvent& final_ev = r.trace.events[r.final_exit_index];
  // Entry sample plus one sample per intermediate inward-or-tangential event.
  ScatteringSample entry = make_sample(m, start, final_ev, ScatteringKind::complete,
                                       static_cast<int>(r.final_exit_index) + 1);
  out.push_back(entry);
  for (std::size_t i = 0; i < r.final_exit_index; ++i) {
    const BoundaryEvent& ev = r.trace.events[i];
    if (ev.kind == EventKind::exit) continue;
    ScatteringSample s;
    s.inbound = {ev.point, ev.velocity, std::nullopt};
    if (m.signature == SignatureKind::lorentzian)
      s.inbound.causal_class = m.classify(ev.point, ev.velocity);
    s.outbound = {final_ev.point, final_ev.velocity, std::nullopt};
    if (m.signature == SignatureKind::lorentzian)
      s.outbound.causal_class = m.classify(final_ev.point, final_ev.velocity);
    s.tau = final_ev.t - ev.t;
    double q = m.inner(ev.point, ev.velocity, ev.velocity);
    s.length = s.tau * std::sqrt(std::abs(q));
    s.kind = ScatteringKind::complete;
    s.event_count = static_cast<int>(r.final_exit_index - i);
    out.push_back(s);
  }
  return out;
}

ScatteringTable build_scattering_table(const ChartMetric& m, const DomainSpec& d,
                                       const std::vector<TangentVec>& starts, ScatteringKind kind,
                                       double t_max, const ScatteringOptions& opts) {
  ScatteringTable table;
  table.kind = kind;
  for (const auto& start : starts) {
    try {
      ScatteringSample s = kind == ScatteringKind::interior
                               ? interior_scattering(m, d, start, t_max, opts)
                               : complete_scattering(m, d, start, t_max, opts);
      table.samples.push_back(std::move(s));
    } catch (const Error& e) {
      table.failures.push_back({start, e.what()});
    }
  }
  // Duplicate inbound keys are a grid construction bug; reject them.
  for (std::size_t i = 0; i < table.samples.size(); ++i)
    for (std::size_t j = i + 1; j < table.samples.size(); ++j) {
      const auto& a = table.samples[i].inbound;
      const auto& b = table.samples[j].inbound;
      if ((a.base - b.base).norm() < 1e-12 && (a.vec - b.vec).norm() < 1e-12)
        fail(ErrorKind::precondition, "build_scattering_table: duplicate inbound keys");
    }
  return table;
}

Vec probe_direction(const ChartMetric& m, const DomainSpec& d, const Vec& p, const Vec& v,
                    double eps) {
  Vec n_in = inward_normal(m, d, p);
  double sc = m.signature == SignatureKind::lorentzian ? std::sqrt(1.0 + eps * eps)
                                                       : std::sqrt(1.0 - eps * eps);
  return sc * v + eps * n_in;
}

std::string table_to_csv(const ScatteringTable& table) {
  std::ostringstream os;
  int n = table.samples.empty() ? 0 : static_cast<int>(table.samples.front().inbound.base.size());
  auto col = [&](const std::string& base, int k) {
    for (int i = 0; i < k; ++i) os << base << "[" << i << "],";
  };
  col("x", n);
  col("v", n);
  col("y", n);
  col("w", n);
  os << "tau,length,kind,event_count,provenance\n";
  char buf[64];
  auto put = [&](double val) {
    snprintf(buf, sizeof buf, "%.17g", val);
    os << buf << ",";
  };
  for (const auto& s : table.samples) {
    for (int i = 0; i < n; ++i) put(s.inbound.base(i));
    for (int i = 0; i < n; ++i) put(s.inbound.vec(i));
    for (int i = 0; i < n; ++i) put(s.outbound.base(i));
    for (int i = 0; i < n; ++i) put(s.outbound.vec(i));
    put(s.tau);
    put(s.length);
    os << (s.kind == ScatteringKind::interior ? "interior" : "complete") << ","
       << s.event_count << "," << s.provenance << "\n";
  }
  return os.str();
}

}  // namespace lenslab
