// lenslab - Dormand-Prince geodesic integration with event location
//
// The integrator is RK5(4)7M with the standard 4th-order continuous
// extension (Hairer, Norsett, Wanner, Solving ODEs I). Boundary events are
// bracketed on accepted steps and refined on the dense output.
#include "lenslab/geodesic.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace lenslab {

namespace {

// Dormand-Prince tableau.
constexpr double A21 = 1.0 / 5.0;
constexpr double A31 = 3.0 / 40.0, A32 = 9.0 / 40.0;
constexpr double A41 = 44.0 / 45.0, A42 = -56.0 / 15.0, A43 = 32.0 / 9.0;
constexpr double A51 = 19372.0 / 6561.0, A52 = -25360.0 / 2187.0, A53 = 64448.0 / 6561.0,
                 A54 = -212.0 / 729.0;
constexpr double A61 = 9017.0 / 3168.0, A62 = -355.0 / 33.0, A63 = 46732.0 / 5247.0,
                 A64 = 49.0 / 176.0, A65 = -5103.0 / 18656.0;
constexpr double A71 = 35.0 / 384.0, A73 = 500.0 / 1113.0, A74 = 125.0 / 192.0,
                 A75 = -2187.0 / 6784.0, A76 = 11.0 / 84.0;
constexpr double E1 = 71.0 / 57600.0, E3 = -71.0 / 16695.0, E4 = 71.0 / 1920.0,
                 E5 = -17253.0 / 339200.0, E6 = 22.0 / 525.0, E7 = -1.0 / 40.0;
constexpr double D1 = -12715105075.0 / 11282082432.0, D3 = 87487479700.0 / 32700410799.0,
                 D4 = -10690763975.0 / 1880347072.0, D5 = 701980252875.0 / 199316789632.0,
                 D6 = -1453857185.0 / 822651844.0, D7 = 69997945.0 / 29380423.0;

struct GeodesicRhs {
  const ChartMetric* m;
  int n;
  Vec operator()(const Vec& y) const {
    Vec x = y.head(n), v = y.tail(n);
    Tensor3 gamma = m->christoffel(x);
    Vec f(2 * n);
    f.head(n) = v;
    for (int k = 0; k < n; ++k) f(n + k) = -v.dot(gamma[k] * v);
    return f;
  }
};

}  // namespace

Vec DenseSegment::eval(double t) const {
  double th = (t - t0) / h;
  double th1 = 1.0 - th;
  return r1 + th * (r2 + th1 * (r3 + th * (r4 + th1 * r5)));
}

GeodesicState GeodesicTrace::state_at(double t) const {
  if (segments.empty()) fail(ErrorKind::precondition, "state_at: trace has no dense output");
  t = std::clamp(t, segments.front().t0, segments.back().t0 + segments.back().h);
  // Binary search for the segment containing t.
  std::size_t lo = 0, hi = segments.size() - 1;
  while (lo < hi) {
    std::size_t mid = (lo + hi + 1) / 2;
    if (segments[mid].t0 <= t)
      lo = mid;
    else
      hi = mid - 1;
  }
  Vec y = segments[lo].eval(t);
  GeodesicState st;
  st.x = y.head(dimension);
  st.v = y.tail(dimension);
  return st;
}

namespace {

class Stepper {
public:
  Stepper(const ChartMetric& m, const Vec& y0, double tol)
      : rhs_{&m, m.dimension}, n_(m.dimension), tol_(tol), y_(y0) {
    k1_ = rhs_(y_);
    double xs = std::max(1.0, y0.head(n_).norm());
    double vs = std::max(1.0, y0.tail(n_).norm());
    h_ = 0.01 * xs / vs;
  }

  // Take one accepted step; returns the dense segment. Updates internal state.
  DenseSegment step(double t, double t_remaining) {
    double h = std::min(h_, t_remaining);
    for (int attempt = 0;; ++attempt) {
      if (h < 1e-14 * std::max(1.0, std::abs(t)))
        fail(ErrorKind::stiffness, "integrate_geodesic: step size underflow");
      Vec k2 = rhs_(y_ + h * (A21 * k1_));
      Vec k3 = rhs_(y_ + h * (A31 * k1_ + A32 * k2));
      Vec k4 = rhs_(y_ + h * (A41 * k1_ + A42 * k2 + A43 * k3));
      Vec k5 = rhs_(y_ + h * (A51 * k1_ + A52 * k2 + A53 * k3 + A54 * k4));
      Vec k6 = rhs_(y_ + h * (A61 * k1_ + A62 * k2 + A63 * k3 + A64 * k4 + A65 * k5));
      Vec y1 = y_ + h * (A71 * k1_ + A73 * k3 + A74 * k4 + A75 * k5 + A76 * k6);
      Vec k7 = rhs_(y1);
      Vec err_v = h * (E1 * k1_ + E3 * k3 + E4 * k4 + E5 * k5 + E6 * k6 + E7 * k7);

      double err = 0.0;
      for (int i = 0; i < 2 * n_; ++i) {
        double sc = tol_ + tol_ * std::max(std::abs(y_(i)), std::abs(y1(i)));
        err += (err_v(i) / sc) * (err_v(i) / sc);
      }
      err = std::sqrt(err / (2 * n_));

      if (err <= 1.0) {
        DenseSegment seg;
        seg.t0 = t;
        seg.h = h;
        seg.r1 = y_;
        seg.r2 = y1 - y_;
        seg.r3 = h * k1_ - seg.r2;
        seg.r4 = seg.r2 - h * k7 - seg.r3;
        seg.r5 = h * (D1 * k1_ + D3 * k3 + D4 * k4 + D5 * k5 + D6 * k6 + D7 * k7);
        y_ = y1;
        k1_ = k7;  // FSAL
        double fac = err > 0.0 ? 0.9 * std::pow(err, -0.2) : 5.0;
        h_ = h * std::clamp(fac, 0.2, 5.0);
        return seg;
      }
      double fac = std::max(0.2, 0.9 * std::pow(err, -0.2));
      h = h * fac;
    }
  }

  const Vec& y() const { return y_; }

private:
  GeodesicRhs rhs_;
  int n_;
  double tol_;
  double h_;
  Vec y_;
  Vec k1_;
};

double phi_at(const DomainSpec& d, const DenseSegment& seg, int n, double t) {
  return d.phi(seg.eval(t).head(n));
}

double dphi_dt(const DomainSpec& d, const DenseSegment& seg, int n, double t) {
  Vec y = seg.eval(t);
  return d.dphi(y.head(n)).dot(y.tail(n));
}

// Hybrid bisection/secant root refinement of phi along a dense segment. The
// bracket is shrunk to parameter precision so shallow crossings do not lose
// accuracy through a small |dphi/dt|.
double refine_root(const DomainSpec& d, const DenseSegment& seg, int n, double ta, double tb) {
  double fa = phi_at(d, seg, n, ta), fb = phi_at(d, seg, n, tb);
  double width_tol = 1e-14 * std::max({1.0, std::abs(ta), std::abs(tb)});
  for (int it = 0; it < 200 && std::abs(tb - ta) > width_tol; ++it) {
    double tm = tb - fb * (tb - ta) / (fb - fa);  // secant
    double lo = std::min(ta, tb), hi = std::max(ta, tb);
    if (!(tm > lo && tm < hi) || it % 4 == 3) tm = 0.5 * (ta + tb);  // guarded bisection
    double fm = phi_at(d, seg, n, tm);
    if ((fa < 0.0) != (fm < 0.0)) {
      tb = tm;
      fb = fm;
    } else {
      ta = tm;
      fa = fm;
    }
  }
  return std::abs(fa) < std::abs(fb) ? ta : tb;
}

// Golden-section minimization of phi along a segment (graze detection).
double minimize_phi(const DomainSpec& d, const DenseSegment& seg, int n, double ta, double tb) {
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = ta, b = tb;
  double c = b - gr * (b - a), e = a + gr * (b - a);
  double fc = phi_at(d, seg, n, c), fe = phi_at(d, seg, n, e);
  while (b - a > 1e-14 * std::max(1.0, std::abs(b))) {
    if (fc < fe) {
      b = e;
      e = c;
      fe = fc;
      c = b - gr * (b - a);
      fc = phi_at(d, seg, n, c);
    } else {
      a = c;
      c = e;
      fc = fe;
      e = a + gr * (b - a);
      fe = phi_at(d, seg, n, e);
    }
  }
  return 0.5 * (a + b);
}

BoundaryEvent make_event(const DomainSpec& d, const DenseSegment& seg, int n, double t) {
  Vec y = seg.eval(t);
  BoundaryEvent ev;
  ev.t = t;
  ev.point = y.head(n);
  ev.velocity = y.tail(n);
  ev.transversality = d.dphi(ev.point).dot(ev.velocity) / ev.velocity.norm();
  if (std::abs(ev.transversality) <= defaults::tangent_threshold)
    ev.kind = EventKind::tangential;
  else
    ev.kind = ev.transversality > 0.0 ? EventKind::enter : EventKind::exit;
  return ev;
}

// Collect events (roots and grazes of phi) on one dense segment. Roots are
// sought in (0, t_max]: a start sitting on the boundary reads as phi = 0, not
// as a crossing.
void scan_segment(const DomainSpec& d, const DenseSegment& seg, int n,
                  std::vector<BoundaryEvent>& events, int max_events) {
  const int sub = 8;
  double t0 = seg.t0;
  double prev_t = t0;
  double prev_phi = phi_at(d, seg, n, t0);
  if (t0 == 0.0 && std::abs(prev_phi) < defaults::event_tol) prev_phi = 0.0;
  for (int i = 1; i <= sub; ++i) {
    double ti = t0 + seg.h * i / sub;
    double pi = phi_at(d, seg, n, ti);
    if ((prev_phi < 0.0) != (pi < 0.0)) {
      double tr = refine_root(d, seg, n, prev_t, ti);
      if (tr > 1e-12 && (events.empty() || tr > events.back().t + 1e-12))
        events.push_back(make_event(d, seg, n, tr));
    } else if (std::min(prev_phi, pi) > 0.0 &&
               dphi_dt(d, seg, n, prev_t) < 0.0 && dphi_dt(d, seg, n, ti) > 0.0) {
      // One-signed dip: a tangential graze if the interior minimum reaches phi ~ 0.
      double tm = minimize_phi(d, seg, n, prev_t, ti);
      double pm = phi_at(d, seg, n, tm);
      if (std::abs(pm) < defaults::event_tol && tm > 1e-12 &&
          (events.empty() || tm > events.back().t + 1e-12))
        events.push_back(make_event(d, seg, n, tm));
    }
    if (static_cast<int>(events.size()) > max_events)
      fail(ErrorKind::event_overflow, "trace_through_domain: more than max_events boundary events");
    prev_t = ti;
    prev_phi = pi;
  }
}

}  // namespace

GeodesicTrace integrate_geodesic(const ChartMetric& m, const TangentVec& start, double t_max,
                                 double tol) {
  TraceOptions opts;
  opts.tol = tol;
  DomainSpec no_boundary;
  no_boundary.defining_fn = [](const Vec&) { return 1.0; };
  no_boundary.defining_gradient = [n = m.dimension](const Vec&) { return Vec::Zero(n); };
  no_boundary.chart_bounds.lo = Vec::Constant(m.dimension, -1e30);
  no_boundary.chart_bounds.hi = Vec::Constant(m.dimension, 1e30);
  return trace_through_domain(m, no_boundary, start, t_max, opts);
}

GeodesicTrace trace_through_domain(const ChartMetric& m, const DomainSpec& d,
                                   const TangentVec& start, double t_max,
                                   const TraceOptions& opts) {
  if (!d.in_chart(start.base))
    fail(ErrorKind::domain, "trace_through_domain: start outside chart bounds");
  if (t_max <= 0.0) fail(ErrorKind::precondition, "trace_through_domain: t_max must be positive");

  const int n = m.dimension;
  GeodesicTrace tr;
  tr.dimension = n;
  tr.energy = m.inner(start.base, start.vec, start.vec);

  Vec y0(2 * n);
  y0.head(n) = start.base;
  y0.tail(n) = start.vec;
  tr.samples.push_back({0.0, start.base, start.vec});

  Stepper stepper(m, y0, opts.tol);
  double t = 0.0;
  double exit_window = 10.0 * std::sqrt(defaults::event_tol) * std::max(1.0, start.base.norm());
  std::size_t exit_candidate = 0;  // index into events of the next unconfirmed exit
  const double t_fuzz = 1e-12 * std::max(1.0, t_max);

  while (t < t_max - t_fuzz) {
    DenseSegment seg = stepper.step(t, t_max - t);
    t = seg.t0 + seg.h;
    tr.segments.push_back(seg);
    scan_segment(d, seg, n, tr.events, opts.max_events);
    Vec x_now = stepper.y().head(n);
    tr.samples.push_back({t, x_now, stepper.y().tail(n)});

    if (opts.stop_at_first_event && !tr.events.empty()) {
      tr.termination = Termination::event_stop;
      tr.t_end = tr.events.front().t;
      return tr;
    }
    if (opts.stop_after_final_exit) {
      while (exit_candidate < tr.events.size()) {
        const BoundaryEvent& ev = tr.events[exit_candidate];
        if (ev.kind != EventKind::exit) {
          ++exit_candidate;
          continue;
        }
        if (t < ev.t + exit_window) break;  // window not yet covered
        bool outside = true;
        for (const auto& later : tr.events)
          if (later.t > ev.t + 1e-12 && later.t < ev.t + exit_window &&
              later.kind == EventKind::enter)
            outside = false;
        if (outside && d.phi(tr.state_at(ev.t + exit_window).x) < 0.0) {
          tr.termination = Termination::event_stop;
          tr.t_end = ev.t;
          return tr;
        }
        ++exit_candidate;  // not final, look for a later exit
      }
    }
    if (!d.in_chart(x_now)) {
      tr.termination = Termination::left_chart;
      tr.t_end = t;
      return tr;
    }
  }
  tr.termination = Termination::reached_t_max;
  tr.t_end = t_max;
  return tr;
}

Vec exp_map(const ChartMetric& m, const Vec& x, const Vec& v, double tol) {
  if (v.norm() == 0.0) return x;
  GeodesicTrace tr = integrate_geodesic(m, {x, v, std::nullopt}, 1.0, tol);
  return tr.state_at(1.0).x;
}

TangentVec shoot(const ChartMetric& m, const Vec& x, const Vec& y, const Vec& v0,
                 std::optional<double> t_fixed, double shoot_tol) {
  const int n = m.dimension;
  double t_end = t_fixed.value_or(1.0);
  auto endpoint = [&](const Vec& v) -> Vec {
    GeodesicTrace tr = integrate_geodesic(m, {x, v, std::nullopt}, t_end, defaults::ode_tol);
    return tr.state_at(t_end).x;
  };

  Vec v = v0;
  Vec f = endpoint(v) - y;
  for (int iter = 0; iter < defaults::shoot_max_iter; ++iter) {
    if (f.norm() < shoot_tol) {
      TangentVec out{x, v, std::nullopt};
      if (m.signature == SignatureKind::lorentzian) out.causal_class = m.classify(x, v);
      return out;
    }
    Mat jac(n, n);
    double hv = 1e-7 * std::max(1.0, v.norm());
    for (int j = 0; j < n; ++j) {
      Vec vp = v, vm = v;
      vp(j) += hv;
      vm(j) -= hv;
      jac.col(j) = (endpoint(vp) - endpoint(vm)) / (2.0 * hv);
    }
    Eigen::FullPivLU<Mat> lu(jac);
    if (!lu.isInvertible() || lu.rcond() < 1e-12)
      fail(ErrorKind::singular_jacobian, "shoot: endpoint map is conjugate-degenerate");
    Vec dv = lu.solve(f);
    // Damped Newton update.
    double lambda = 1.0;
    for (int bt = 0; bt < 12; ++bt) {
      Vec v_try = v - lambda * dv;
      Vec f_try = endpoint(v_try) - y;
      if (f_try.norm() < f.norm()) {
        v = v_try;
        f = f_try;
        break;
      }
      lambda *= 0.5;
      if (bt == 11) fail(ErrorKind::shooting_failure, "shoot: no decrease along Newton direction");
    }
  }
  fail(ErrorKind::shooting_failure, "shoot: no convergence within max_iter");
}

Vec JacobiSolution::at(double t) const {
  if (ts.empty()) fail(ErrorKind::precondition, "JacobiSolution::at: empty solution");
  auto it = std::lower_bound(ts.begin(), ts.end(), t);
  if (it == ts.begin()) return J.front();
  if (it == ts.end()) return J.back();
  std::size_t i = static_cast<std::size_t>(it - ts.begin());
  double w = (t - ts[i - 1]) / (ts[i] - ts[i - 1]);
  return (1.0 - w) * J[i - 1] + w * J[i];
}

namespace {

// d_m Gamma^k_ij by central differences, step per the documented accuracy.
Tensor3 christoffel_partial(const ChartMetric& m, const Vec& x, int dir) {
  double h = defaults::curvature_fd_step;
  Vec xp = x, xm = x;
  xp(dir) += h;
  xm(dir) -= h;
  Tensor3 gp = m.christoffel(xp), gm = m.christoffel(xm);
  Tensor3 out(m.dimension);
  for (int k = 0; k < m.dimension; ++k) out[k] = (gp[k] - gm[k]) / (2.0 * h);
  return out;
}

// Variational RHS along a stored geodesic: states are stacked (J, dJ/dt) blocks.
struct JacobiRhs {
  const ChartMetric* m;
  const GeodesicTrace* trace;
  int n;
  int count;  // number of simultaneous Jacobi fields
  Vec operator()(double t, const Vec& y) const {
    GeodesicState st = trace->state_at(t);
    Tensor3 gamma = m->christoffel(st.x);
    std::vector<Tensor3> dgamma(n);
    for (int dir = 0; dir < n; ++dir) dgamma[dir] = christoffel_partial(*m, st.x, dir);
    Vec f(y.size());
    for (int c = 0; c < count; ++c) {
      auto J = y.segment(c * 2 * n, n);
      auto W = y.segment(c * 2 * n + n, n);
      f.segment(c * 2 * n, n) = W;
      for (int k = 0; k < n; ++k) {
        double acc = 0.0;
        for (int mm = 0; mm < n; ++mm) acc += dgamma[mm][k].cwiseProduct(st.v * st.v.transpose()).sum() * J(mm);
        double cross = 0.0;
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j) cross += gamma[k](i, j) * (W(i) * st.v(j) + st.v(i) * W(j));
        f(c * 2 * n + n + k) = -acc - cross;
      }
    }
    return f;
  }
};

// Classical RK4 over a window; curvature is already only ~1e-6 accurate so a
// fixed fine grid is sufficient.
std::pair<std::vector<double>, std::vector<Vec>> integrate_jacobi_window(
    const ChartMetric& m, const GeodesicTrace& trace, double t_a, double t_b, const Vec& y_a,
    int count, int steps_total) {
  JacobiRhs rhs{&m, &trace, m.dimension, count};
  double h = (t_b - t_a) / steps_total;
  std::vector<double> ts;
  std::vector<Vec> ys;
  Vec y = y_a;
  double t = t_a;
  ts.push_back(t);
  ys.push_back(y);
  for (int i = 0; i < steps_total; ++i) {
    Vec k1 = rhs(t, y);
    Vec k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1);
    Vec k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2);
    Vec k4 = rhs(t + h, y + h * k3);
    y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    t += h;
    ts.push_back(t);
    ys.push_back(y);
  }
  return {ts, ys};
}

std::pair<std::vector<double>, std::vector<Vec>> integrate_jacobi(const ChartMetric& m,
                                                                  const GeodesicTrace& trace,
                                                                  const Vec& y0, int count,
                                                                  int steps_total = 1200) {
  double t_end = trace.t_end > 0.0 ? trace.t_end : trace.samples.back().t;
  return integrate_jacobi_window(m, trace, 0.0, t_end, y0, count, steps_total);
}

}  // namespace

JacobiSolution jacobi_field(const ChartMetric& m, const GeodesicTrace& trace, const Vec& J0,
                            const Vec& J0_prime) {
  const int n = m.dimension;
  GeodesicState st0 = trace.state_at(0.0);
  Tensor3 gamma0 = m.christoffel(st0.x);
  Vec W0(n);
  for (int k = 0; k < n; ++k) W0(k) = J0_prime(k) - st0.v.dot(gamma0[k] * J0);

  Vec y0(2 * n);
  y0.head(n) = J0;
  y0.tail(n) = W0;
  auto [ts, ys] = integrate_jacobi(m, trace, y0, 1);

  JacobiSolution sol;
  sol.along = &trace;
  sol.ts = ts;
  double max_norm = 0.0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    Vec J = ys[i].head(n);
    Vec W = ys[i].tail(n);
    GeodesicState st = trace.state_at(ts[i]);
    Tensor3 gamma = m.christoffel(st.x);
    Vec Jp(n);
    for (int k = 0; k < n; ++k) Jp(k) = W(k) + st.v.dot(gamma[k] * J);
    sol.J.push_back(J);
    sol.J_prime.push_back(Jp);
    max_norm = std::max(max_norm, J.norm());
  }
  // First nontrivial vanishing after the start: local minima of |J|^2 refined
  // by quadratic interpolation, so grid alignment is not required.
  for (std::size_t i = 2; i + 1 < sol.J.size(); ++i) {
    double f0 = sol.J[i - 1].squaredNorm();
    double f1 = sol.J[i].squaredNorm();
    double f2 = sol.J[i + 1].squaredNorm();
    if (!(f1 <= f0 && f1 <= f2)) continue;
    double denom = f0 - 2.0 * f1 + f2;
    double dt = ts[i] - ts[i - 1];
    double shift = denom > 0.0 ? 0.5 * dt * (f0 - f2) / denom : 0.0;
    double fmin = denom > 0.0 ? f1 - 0.125 * (f0 - f2) * (f0 - f2) / denom : f1;
    double scale = 1e-5 * std::max(1.0, max_norm);
    if (fmin < scale * scale && ts[i] > 1e-9) {
      sol.first_zero = ts[i] + shift;
      break;
    }
  }
  return sol;
}

std::optional<double> first_conjugate_time(const ChartMetric& m, const GeodesicTrace& trace,
                                           double conj_tol) {
  const int n = m.dimension;
  GeodesicState st0 = trace.state_at(0.0);
  // Basis of a complement of the flow direction.
  Vec vhat = st0.v.normalized();
  std::vector<Vec> basis;
  for (int i = 0; i < n && static_cast<int>(basis.size()) < n - 1; ++i) {
    Vec e = Vec::Zero(n);
    e(i) = 1.0;
    e -= e.dot(vhat) * vhat;
    for (const auto& b : basis) e -= e.dot(b) * b;
    if (e.norm() > 1e-8) basis.push_back(e.normalized());
  }

  const int count = n - 1;
  Vec y0 = Vec::Zero(count * 2 * n);
  for (int c = 0; c < count; ++c) y0.segment(c * 2 * n + n, n) = basis[c];
  auto [ts, ys] = integrate_jacobi(m, trace, y0, count);

  auto sigma_of = [&](double t, const Vec& y) {
    GeodesicState st = trace.state_at(t);
    Vec u = st.v.normalized();
    Mat M(n, count);
    for (int c = 0; c < count; ++c) {
      Vec J = y.segment(c * 2 * n, n);
      M.col(c) = J - J.dot(u) * u;  // transverse part of the endpoint map
    }
    M /= std::max(t, 1e-12);  // remove the trivial linear growth
    Eigen::JacobiSVD<Mat> svd(M);
    return svd.singularValues().minCoeff();
  };

  std::vector<double> sig(ts.size(), 1e30);
  for (std::size_t i = 1; i < ts.size(); ++i) sig[i] = sigma_of(ts[i], ys[i]);

  // Scan for a dip of the smallest singular value, zoom in twice by
  // re-integrating the bracketing window, then threshold against conj_tol.
  for (std::size_t i = 2; i + 1 < ts.size(); ++i) {
    if (!(sig[i] <= sig[i - 1] && sig[i] <= sig[i + 1] && sig[i] < 1e-2)) continue;
    double t_a = ts[i - 1], t_b = ts[i + 1];
    Vec y_a = ys[i - 1];
    double t_star = ts[i], s_star = sig[i];
    for (int zoom = 0; zoom < 2; ++zoom) {
      auto [wts, wys] = integrate_jacobi_window(m, trace, t_a, t_b, y_a, count, 200);
      std::size_t best = 0;
      s_star = 1e30;
      for (std::size_t j = 0; j < wts.size(); ++j) {
        double s = sigma_of(wts[j], wys[j]);
        if (s < s_star) {
          s_star = s;
          best = j;
        }
      }
      t_star = wts[best];
      std::size_t lo = best > 0 ? best - 1 : 0;
      std::size_t hi = std::min(best + 1, wts.size() - 1);
      t_a = wts[lo];
      t_b = wts[hi];
      y_a = wys[lo];
    }
    if (s_star < conj_tol) return t_star;
  }
  return std::nullopt;
}

TangentVec sample_transversal_perturbation(const ChartMetric& m, const DomainSpec& d, const Vec& x,
                                           const Vec& v, double cone_radius, std::uint64_t seed,
                                           double t_max, int max_rejections) {
  const int n = m.dimension;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);

  double q_target = m.inner(x, v, v);
  Vec v_sp = v.tail(n - 1);
  double sp_norm = v_sp.norm();
  if (sp_norm < 1e-14)
    fail(ErrorKind::precondition, "sample_transversal_perturbation: spatial part vanishes");
  bool on_boundary = std::abs(d.phi(x)) < 10.0 * defaults::event_tol;

  for (int draw = 0; draw < max_rejections; ++draw) {
    // Uniform direction in the cone: rotate the spatial direction by a random
    // tangent perturbation of angle <= cone_radius.
    Vec w = Vec::Zero(n - 1);
    for (int i = 0; i < n - 1; ++i) w(i) = uni(rng);
    w -= w.dot(v_sp) / v_sp.squaredNorm() * v_sp;
    if (w.norm() < 1e-12) continue;
    double angle = cone_radius * std::abs(uni(rng));
    Vec dir = (v_sp / sp_norm * std::cos(angle) + w.normalized() * std::sin(angle)) * sp_norm;

    // Restore the causal class by solving the quadratic for the time component.
    Mat g = m.metric(x);
    double A = g(0, 0);
    double B = 0.0, C = 0.0;
    for (int i = 1; i < n; ++i) {
      B += g(0, i) * dir(i - 1);
      for (int j = 1; j < n; ++j) C += g(i, j) * dir(i - 1) * dir(j - 1);
    }
    double disc = B * B - A * (C - q_target);
    if (disc < 0.0) continue;
    double root1 = (-B + std::sqrt(disc)) / A;
    double root2 = (-B - std::sqrt(disc)) / A;
    double vt = std::abs(root1 - v(0)) < std::abs(root2 - v(0)) ? root1 : root2;

    Vec cand(n);
    cand(0) = vt;
    cand.tail(n - 1) = dir;

    GeodesicTrace tr;
    try {
      tr = trace_through_domain(m, d, {x, cand, std::nullopt}, t_max, {});
    } catch (const Error&) {
      continue;
    }
    bool all_transversal = true;
    for (const auto& ev : tr.events)
      if (ev.kind == EventKind::tangential) all_transversal = false;
    if (on_boundary && tr.events.empty() && d.dphi(x).dot(cand) <= 0.0) continue;
    if (all_transversal) {
      TangentVec out{x, cand, std::nullopt};
      if (m.signature == SignatureKind::lorentzian) out.causal_class = m.classify(x, cand);
      return out;
    }
  }
  fail(ErrorKind::sampling_failure,
       "sample_transversal_perturbation: max_rejections exceeded (cone too small or geometry "
       "degenerate)");
}

}  // namespace lenslab
