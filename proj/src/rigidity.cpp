// lenslab - time separation, cut locus, exterior reconstruction, isometries
#include "lenslab/rigidity.hpp"

#include <algorithm>
#include <cmath>

namespace lenslab {

namespace {

// 4-point Gauss-Legendre on [0, 1].
const double kGaussS[4] = {0.06943184420297371, 0.33000947820757187, 0.6699905217924281,
                           0.9305681557970262};
const double kGaussW[4] = {0.17392742256872692, 0.32607257743127305, 0.32607257743127305,
                           0.17392742256872692};

constexpr double kViolationWeight = 50.0;

struct ChainWorkspace {
  const ChartMetric* m;
  const DomainSpec* d;

  // Proper time and causality penalty of one straight chart segment, with
  // gradients with respect to both endpoints.
  double segment(const Vec& a, const Vec& b, Vec* grad_a, Vec* grad_b) const {
    const int n = m->dimension;
    Vec delta = b - a;
    double value = 0.0;
    if (grad_a) {
      grad_a->setZero(n);
      grad_b->setZero(n);
    }
    for (int g = 0; g < 4; ++g) {
      double s = kGaussS[g], w = kGaussW[g];
      Vec xs = a + s * delta;
      Mat gm = m->metric(xs);
      double q = delta.dot(gm * delta);
      Vec dq_a, dq_b;
      if (grad_a) {
        Tensor3 dg = m->metric_derivatives(xs);
        dq_a.setZero(n);
        dq_b.setZero(n);
        Vec gd = gm * delta;
        for (int c = 0; c < n; ++c) {
          double dgc = delta.dot(dg[c] * delta);
          dq_a(c) = (1.0 - s) * dgc - 2.0 * gd(c);
          dq_b(c) = s * dgc + 2.0 * gd(c);
        }
      }
      if (q < 0.0) {
        double pt = std::sqrt(-q);
        value += w * pt;
        if (grad_a) {
          *grad_a += w * (-0.5 / pt) * dq_a;
          *grad_b += w * (-0.5 / pt) * dq_b;
        }
      } else {
        value -= kViolationWeight * w * q;
        if (grad_a) {
          *grad_a -= kViolationWeight * w * dq_a;
          *grad_b -= kViolationWeight * w * dq_b;
        }
      }
      // Segments must stay in the domain, not just their endpoints.
      double p = d->phi(xs);
      if (p < 0.0) {
        value -= kViolationWeight * p * p;
        if (grad_a) {
          Vec dphi = d->dphi(xs);
          *grad_a -= kViolationWeight * 2.0 * p * (1.0 - s) * dphi;
          *grad_b -= kViolationWeight * 2.0 * p * s * dphi;
        }
      }
    }
    // Future orientation: penalize non-increasing coordinate time.
    if (delta(0) < 0.0) {
      value -= kViolationWeight * delta(0) * delta(0);
      if (grad_a) {
        (*grad_a)(0) += 2.0 * kViolationWeight * delta(0);
        (*grad_b)(0) -= 2.0 * kViolationWeight * delta(0);
      }
    }
    return value;
  }

  double objective(const std::vector<Vec>& nodes, std::vector<Vec>* grad) const {
    const int n = m->dimension;
    double total = 0.0;
    if (grad) grad->assign(nodes.size(), Vec::Zero(n));
    Vec ga(n), gb(n);
    for (std::size_t i = 0; i + 1 < nodes.size(); ++i) {
      total += segment(nodes[i], nodes[i + 1], grad ? &ga : nullptr, grad ? &gb : nullptr);
      if (grad) {
        (*grad)[i] += ga;
        (*grad)[i + 1] += gb;
      }
    }
    return total;
  }

  // Proper time of the causal parts only (the reported chain value).
  double proper_time(const std::vector<Vec>& nodes) const {
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < nodes.size(); ++i) {
      Vec delta = nodes[i + 1] - nodes[i];
      for (int g = 0; g < 4; ++g) {
        Vec xs = nodes[i] + kGaussS[g] * delta;
        double q = delta.dot(m->metric(xs) * delta);
        if (q < 0.0) total += kGaussW[g] * std::sqrt(-q);
      }
    }
    return total;
  }

  double violation(const std::vector<Vec>& nodes) const {
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < nodes.size(); ++i) {
      Vec delta = nodes[i + 1] - nodes[i];
      for (int g = 0; g < 4; ++g) {
        Vec xs = nodes[i] + kGaussS[g] * delta;
        double q = delta.dot(m->metric(xs) * delta);
        if (q > 0.0) total += kGaussW[g] * q;
        double p = d->phi(xs);
        if (p < 0.0) total += p * p;
      }
      if (delta(0) < 0.0) total += delta(0) * delta(0);
    }
    return total;
  }

  void project(Vec& x) const {
    for (int i = 0; i < x.size(); ++i)
      x(i) = std::clamp(x(i), d->chart_bounds.lo(i) + 1e-9, d->chart_bounds.hi(i) - 1e-9);
    for (int it = 0; it < 8; ++it) {
      double p = d->phi(x);
      if (p >= 0.0) return;
      Vec g = d->dphi(x);
      double gn = g.squaredNorm();
      if (gn < 1e-16) {
        // Degenerate gradient (e.g. the exact center of an annular hole):
        // nudge deterministically and retry.
        x(x.size() - 1) += 1e-2;
        continue;
      }
      x -= (p / gn) * g;
    }
  }
};

}  // namespace

TimeSeparationField::TimeSeparationField(const CatalogScenario& cat, TimesepMethod method,
                                         ChainParams chain)
    : metric_(&cat.metric),
      domain_(&cat.domain),
      periods_(cat.periodic_dims),
      method_(method),
      chain_(chain) {}

double TimeSeparationField::operator()(const Vec& x, const Vec& y) const {
  return evaluate(x, y, nullptr);
}

double TimeSeparationField::evaluate(const Vec& x, const Vec& y, bool* stalled) const {
  if (stalled) *stalled = false;
  // Periodic charts: the maximizing causal curve may reach a shifted
  // representative of the target.
  std::vector<Vec> targets{y};
  for (const auto& [dim, period] : periods_) {
    std::vector<Vec> expanded;
    for (const auto& t : targets)
      for (int k = -1; k <= 1; ++k) {
        Vec ty = t;
        ty(dim) += k * period;
        expanded.push_back(ty);
      }
    targets = std::move(expanded);
  }
  double best = 0.0;
  for (const auto& t : targets) {
    double v = method_ == TimesepMethod::shooting ? shooting_d(x, t) : chain_d(x, t, stalled);
    best = std::max(best, v);
  }
  return best;
}

double TimeSeparationField::shooting_d(const Vec& x, const Vec& y) const {
  if (y(0) <= x(0)) return 0.0;  // coordinate time is a time function on the catalogs
  double best = 0.0;
  Vec guess = y - x;
  for (int attempt = 0; attempt < 2; ++attempt) {
    Vec v0 = attempt == 0 ? guess : Vec(0.8 * guess);
    try {
      TangentVec sol = shoot(*metric_, x, y, v0, std::nullopt, 1e-12);
      double q = metric_->inner(x, sol.vec, sol.vec);
      if (metric_->future_pointing(sol.vec) && q < 0.0) best = std::max(best, std::sqrt(-q));
      break;
    } catch (const Error&) {
      continue;
    }
  }
  return best;
}

double TimeSeparationField::chain_d(const Vec& x, const Vec& y, bool* stalled) const {
  if (y(0) <= x(0)) return 0.0;
  if (!domain_->in_chart(y) || !domain_->in_chart(x)) return 0.0;
  ChainWorkspace ws{metric_, domain_};

  double best_value = 0.0;
  std::vector<Vec> nodes;
  double prev_value = -1.0;
  for (int segs = chain_.segments_init; segs <= chain_.segments_max; segs *= 2) {
    if (nodes.empty()) {
      nodes.resize(segs + 1);
      for (int i = 0; i <= segs; ++i) {
        nodes[i] = x + (double(i) / segs) * (y - x);
        ws.project(nodes[i]);
      }
      nodes.front() = x;
      nodes.back() = y;
    } else {
      std::vector<Vec> fine;
      for (std::size_t i = 0; i + 1 < nodes.size(); ++i) {
        fine.push_back(nodes[i]);
        Vec mid = 0.5 * (nodes[i] + nodes[i + 1]);
        ws.project(mid);
        fine.push_back(mid);
      }
      fine.push_back(nodes.back());
      nodes = std::move(fine);
    }

    // Projected gradient ascent with backtracking.
    std::vector<Vec> grad;
    double fcur = ws.objective(nodes, &grad);
    double scale = std::max(1.0, (y - x).norm());
    for (int it = 0; it < chain_.ascent_iters; ++it) {
      double gnorm = 0.0;
      for (std::size_t i = 1; i + 1 < nodes.size(); ++i) gnorm += grad[i].squaredNorm();
      gnorm = std::sqrt(gnorm);
      if (gnorm < 1e-12) break;
      double alpha = 0.05 * scale / gnorm;
      bool accepted = false;
      for (int bt = 0; bt < 14; ++bt) {
        std::vector<Vec> trial = nodes;
        for (std::size_t i = 1; i + 1 < trial.size(); ++i) {
          trial[i] += alpha * grad[i];
          ws.project(trial[i]);
        }
        std::vector<Vec> tg;
        double ftrial = ws.objective(trial, &tg);
        if (ftrial > fcur + 1e-14) {
          bool settled = ftrial - fcur < 1e-12 * std::max(1.0, std::abs(fcur));
          nodes = std::move(trial);
          grad = std::move(tg);
          fcur = ftrial;
          accepted = true;
          if (settled) it = chain_.ascent_iters;
          break;
        }
        alpha *= 0.5;
      }
      if (!accepted) break;
    }

    double value = ws.proper_time(nodes);
    best_value = std::max(best_value, value);
    if (prev_value >= 0.0 &&
        best_value - prev_value < chain_.rtol * std::max(1.0, std::abs(best_value)))
      break;
    prev_value = best_value;
  }
  if (stalled && !nodes.empty() && ws.violation(nodes) > 1e-9) *stalled = true;
  return best_value;
}

CausalRelation causal_boundary_class(const TimeSeparationField& field, const Vec& x, const Vec& y,
                                     double tol) {
  if (field(x, y) > tol) return CausalRelation::chronological;
  // Null test: a future-pointing lightlike geodesic from x reaching y.
  bool shot_ok = false;
  for (int attempt = 0; attempt < 2; ++attempt) {
    try {
      Vec guess = attempt == 0 ? Vec(y - x) : Vec(1.2 * (y - x));
      TangentVec sol = shoot(field.metric(), x, y, guess);
      shot_ok = true;
      double q = field.metric().inner(x, sol.vec, sol.vec);
      if (field.metric().future_pointing(sol.vec) && std::abs(q) <= 1e-6 * sol.vec.squaredNorm())
        return CausalRelation::null_boundary;
      break;
    } catch (const Error&) {
    }
  }
  if (!shot_ok)
    fail(ErrorKind::indeterminate, "causal_boundary_class: shooting failed with d near zero");
  return CausalRelation::non_causal;
}

CutLocusProbe cut_locus_probe(const TimeSeparationField& field, const TangentVec& start,
                              double budget) {
  const ChartMetric& m = field.metric();
  CutLocusProbe probe;
  probe.start = start;

  Vec v = start.vec;
  CausalClass cls = m.classify(start.base, v);
  if (cls == CausalClass::spacelike || cls == CausalClass::zero)
    fail(ErrorKind::precondition, "cut_locus_probe: start must be lightlike or timelike");
  if (cls == CausalClass::timelike) {
    double q = m.inner(start.base, v, v);
    v /= std::sqrt(-q);  // unit speed so that d(x, gamma(s)) = s before the cut
  }

  GeodesicTrace tr = integrate_geodesic(m, {start.base, v, std::nullopt}, budget);
  double t_reach = tr.termination == Termination::left_chart ? tr.t_end : budget;

  const double pred_tol = 3e-4;
  auto predicate = [&](double s) {
    double dv = field(start.base, tr.state_at(s).x);
    return cls == CausalClass::lightlike ? dv > pred_tol : dv > s + pred_tol;
  };

  const int scan = 32;
  double s_true = -1.0, s_false = 0.0;
  for (int i = 1; i <= scan; ++i) {
    double s = t_reach * i / scan;
    if (predicate(s)) {
      s_true = s;
      break;
    }
    s_false = s;
  }
  if (s_true < 0.0) {
    probe.rho = 1e30;
    probe.witness = CutWitness::none_within_budget;
    return probe;
  }
  for (int it = 0; it < 40; ++it) {
    double mid = 0.5 * (s_false + s_true);
    (predicate(mid) ? s_true : s_false) = mid;
  }
  probe.rho = 0.5 * (s_false + s_true);

  // Witness cross-checks: first conjugate time and a second-geodesic search.
  GeodesicTrace seg =
      integrate_geodesic(m, {start.base, v, std::nullopt}, std::min(t_reach, probe.rho * 1.15));
  probe.conjugate_time = first_conjugate_time(m, seg);

  // Second-geodesic search: shoot toward the cut point and toward its
  // period-shifted chart representatives.
  Vec target = tr.state_at(probe.rho).x;
  Vec vhat = v.normalized();
  std::vector<std::pair<Vec, Vec>> attempts;  // (target, guess)
  attempts.push_back({target, probe.rho * v});
  for (const auto& [dim, period] : field.periods()) {
    for (int k : {-1, 1}) {
      Vec t2 = target;
      t2(dim) += k * period;
      Vec g2 = t2 - start.base;
      attempts.push_back({t2, g2});
    }
  }
  for (const auto& [tgt, guess] : attempts) {
    try {
      TangentVec sol = shoot(m, start.base, tgt, guess);
      Vec shat = sol.vec.normalized();
      if ((shat - vhat).norm() > 1e-2) {
        probe.second_geodesic = sol.vec;
        break;
      }
    } catch (const Error&) {
    }
  }

  if (probe.conjugate_time &&
      std::abs(*probe.conjugate_time - probe.rho) < 5e-3 * std::max(1.0, probe.rho))
    probe.witness = CutWitness::conjugate_point;
  else if (probe.second_geodesic)
    probe.witness = CutWitness::second_geodesic;
  else
    probe.witness = CutWitness::none_within_budget;
  return probe;
}

namespace {

// Gradients of the squared separation F = d^2: d grad d = grad(d^2)/2, and
// F stays smooth up to the light cone where d itself has a sqrt kink.
Vec dsq_gradient_second(const TimeSeparationField& field, const Vec& z1, const Vec& y, double h) {
  const int n = static_cast<int>(y.size());
  Vec grad(n);
  Vec yp = y, ym = y;
  for (int i = 0; i < n; ++i) {
    yp(i) = y(i) + h;
    ym(i) = y(i) - h;
    double fp = field(z1, yp), fm = field(z1, ym);
    grad(i) = (fp * fp - fm * fm) / (2.0 * h);
    yp(i) = y(i);
    ym(i) = y(i);
  }
  return grad;
}

Vec dsq_gradient_first(const TimeSeparationField& field, const Vec& z1, const Vec& y, double h) {
  const int n = static_cast<int>(z1.size());
  Vec grad(n);
  Vec zp = z1, zm = z1;
  for (int i = 0; i < n; ++i) {
    zp(i) = z1(i) + h;
    zm(i) = z1(i) - h;
    double fp = field(zp, y), fm = field(zm, y);
    grad(i) = (fp * fp - fm * fm) / (2.0 * h);
    zp(i) = z1(i);
    zm(i) = z1(i);
  }
  return grad;
}

double aitken_limit(double f0, double f1, double f2) {
  double d1 = f1 - f0, d2 = f2 - f1;
  double denom = d2 - d1;
  if (std::abs(denom) < 1e-14 * std::max(1.0, std::abs(f2))) return f2;
  return f2 - d2 * d2 / denom;
}

}  // namespace

NullDirectionRecovery recover_null_direction_via_gradient(const TimeSeparationField& field,
                                                          const Vec& z1, const Vec& y,
                                                          const std::vector<Vec>& approach_seq,
                                                          double fd_h) {
  if (approach_seq.size() < 3)
    fail(ErrorKind::precondition,
         "recover_null_direction_via_gradient: need at least three approach points");
  const ChartMetric& m = field.metric();
  const int n = static_cast<int>(z1.size());

  std::vector<Vec> us, vs;
  double d_last = 0.0;
  for (const Vec& yj : approach_seq) {
    double dj = field(z1, yj);
    if (dj <= 0.0)
      fail(ErrorKind::precondition,
           "recover_null_direction_via_gradient: approach point not chronological from z1");
    d_last = dj;
    // u_j = -d grad_1 d = -(1/2) grad_1 d^2, and similarly at the far end.
    Vec g1 = dsq_gradient_first(field, z1, yj, fd_h);
    Vec g2 = dsq_gradient_second(field, z1, yj, fd_h);
    MetricAt ma1 = m.metric_with_inverse(z1);
    MetricAt ma2 = m.metric_with_inverse(yj);
    us.push_back(-0.5 * (ma1.g_inv * g1));
    vs.push_back(0.5 * (ma2.g_inv * g2));
  }

  // Extrapolate with the most stable consecutive triple: noisy tail members
  // near the cone must not poison the limit.
  const std::size_t k = us.size();
  NullDirectionRecovery out;
  out.d_last = d_last;
  out.u = Vec(n);
  out.w = Vec(n);
  double best_gap = 1e30;
  std::optional<Vec> prev_limit;
  for (std::size_t j = 2; j < k; ++j) {
    Vec cand(n), cand_w(n);
    for (int c = 0; c < n; ++c) {
      cand(c) = aitken_limit(us[j - 2](c), us[j - 1](c), us[j](c));
      cand_w(c) = aitken_limit(vs[j - 2](c), vs[j - 1](c), vs[j](c));
    }
    if (prev_limit) {
      double gap = (cand - *prev_limit).norm();
      if (gap < best_gap) {
        best_gap = gap;
        out.u = cand;
        out.w = cand_w;
      }
    } else {
      out.u = cand;
      out.w = cand_w;
    }
    prev_limit = cand;
  }

  // Stopping rule: with 8 or more terms, the selected limit must be stable to
  // 1e-4 between consecutive extrapolations.
  if (k >= 8 && best_gap > 1e-4)
    fail(ErrorKind::convergence,
         "recover_null_direction_via_gradient: approach sequence did not settle");

  // Orientation fixed by the exp roundtrip.
  double res_plus = (exp_map(m, z1, out.u) - y).norm();
  double res_minus = (exp_map(m, z1, -out.u) - y).norm();
  if (res_minus < res_plus) out.u = -out.u;
  if ((exp_map(m, z1, out.u) - y).norm() > 1e-5 * std::max(1.0, y.norm()))
    fail(ErrorKind::recovery,
         "recover_null_direction_via_gradient: exp roundtrip residual too large");
  double res_wp = (exp_map(m, y, -out.w) - z1).norm();
  double res_wm = (exp_map(m, y, out.w) - z1).norm();
  if (res_wm < res_wp) out.w = -out.w;
  return out;
}

namespace {

DomainSpec exterior_domain(const std::vector<DiskObstacle>& obstacles, double R_M, int n) {
  DomainSpec d;
  d.defining_fn = [obstacles, R_M](const Vec& x) {
    double r = std::hypot(x(1), x(2));
    double best = R_M - r;
    for (const auto& ob : obstacles)
      best = std::min(best, std::hypot(x(1) - ob.cx, x(2) - ob.cy) - ob.r);
    return best;
  };
  d.defining_gradient = [obstacles, R_M](const Vec& x) {
    double r = std::hypot(x(1), x(2));
    double best = R_M - r;
    int which = -1;
    for (std::size_t i = 0; i < obstacles.size(); ++i) {
      double di = std::hypot(x(1) - obstacles[i].cx, x(2) - obstacles[i].cy) - obstacles[i].r;
      if (di < best) {
        best = di;
        which = static_cast<int>(i);
      }
    }
    Vec g = Vec::Zero(x.size());
    if (which < 0) {
      if (r > 1e-12) {
        g(1) = -x(1) / r;
        g(2) = -x(2) / r;
      }
    } else {
      double dx = x(1) - obstacles[which].cx, dy = x(2) - obstacles[which].cy;
      double dd = std::hypot(dx, dy);
      if (dd > 1e-12) {
        g(1) = dx / dd;
        g(2) = dy / dd;
      }
    }
    return g;
  };
  d.chart_bounds.lo = Vec::Constant(n, -50.0);
  d.chart_bounds.hi = Vec::Constant(n, 50.0);
  d.collar_width = 0.1;
  return d;
}

// Cone point of z1 in spatial direction omega at radius s: the time coordinate
// placed on the boundary of {d(z1, .) > 0} by bisection.
Vec cone_point(const TimeSeparationField& field, const Vec& z1, double omega, double s) {
  Vec y = z1;
  y(1) += s * std::cos(omega);
  y(2) += s * std::sin(omega);
  double lo = z1(0) + 0.2 * s, hi = z1(0) + 2.5 * s;
  for (int it = 0; it < 50; ++it) {
    double mid = 0.5 * (lo + hi);
    y(0) = mid;
    (field(z1, y) > 0.0 ? hi : lo) = mid;
  }
  y(0) = 0.5 * (lo + hi);
  return y;
}

}  // namespace

ExteriorDatum exterior_lightlike_traveltime(const TimeSeparationField& field,
                                            const std::vector<DiskObstacle>& obstacles,
                                            double R_M, const TangentVec& start, double t_max) {
  const ChartMetric& m = field.metric();
  const int n = m.dimension;
  if (n != 3)
    fail(ErrorKind::precondition, "exterior_lightlike_traveltime: implemented for n = 3 charts");
  DomainSpec kc = exterior_domain(obstacles, R_M, n);

  ExteriorDatum out;
  out.entry = start;

  // No-cut-point estimate i0: probe the cut locus along the starting state.
  CutLocusProbe cp = cut_locus_probe(field, start, 2.0);
  out.i0_estimate = std::min(cp.rho, 1.0);

  Vec cur_x = start.base;
  Vec cur_v = start.vec;
  double total = 0.0;

  for (int leg = 0; leg < 8; ++leg) {
    TraceOptions topts;
    topts.stop_at_first_event = true;
    GeodesicTrace tr = trace_through_domain(m, kc, {cur_x, cur_v, std::nullopt}, t_max, topts);
    if (tr.events.empty())
      fail(ErrorKind::non_terminating, "exterior_lightlike_traveltime: no boundary event");
    const BoundaryEvent& ev = tr.events.front();
    double r_ev = std::hypot(ev.point(1), ev.point(2));
    if (std::abs(r_ev - R_M) < 1e-6) {
      total += ev.t;
      out.exit = {ev.point, ev.velocity, std::nullopt};
      out.total_parameter = total;
      return out;
    }

    // The line meets the unknown region: back off and recover the
    // continuation from the time separation data.
    double t1 = ev.t;
    double eps = std::min({0.25 * out.i0_estimate, 0.5 * t1, 0.15});
    Vec z1 = tr.state_at(t1 - eps).x;
    Vec z1p = tr.state_at(t1 - 0.5 * eps).x;
    Vec gdot = tr.state_at(t1 - eps).v;

    // Search sphere radius: just past the far side of the obstacle that was
    // hit, so each advance clears one obstacle at a time.
    int hit = 0;
    double hit_depth = 1e30;
    for (std::size_t i = 0; i < obstacles.size(); ++i) {
      double di = std::hypot(ev.point(1) - obstacles[i].cx, ev.point(2) - obstacles[i].cy) -
                  obstacles[i].r;
      if (di < hit_depth) {
        hit_depth = di;
        hit = static_cast<int>(i);
      }
    }
    double s_star =
        std::hypot(z1(1) - obstacles[hit].cx, z1(2) - obstacles[hit].cy) + obstacles[hit].r + 0.1;
    // The landing zone must be free of the other obstacles and inside M.
    double omega_aim = std::atan2(tr.state_at(t1 - eps).v(2), tr.state_at(t1 - eps).v(1));
    auto landing_clear = [&](double s) {
      Vec p = z1;
      p(1) += s * std::cos(omega_aim);
      p(2) += s * std::sin(omega_aim);
      if (std::hypot(p(1), p(2)) > R_M - 0.03) return false;
      for (const auto& ob : obstacles)
        if (std::hypot(p(1) - ob.cx, p(2) - ob.cy) < ob.r + 0.03) return false;
      return true;
    };
    for (int tries = 0; tries < 6 && !landing_clear(s_star); ++tries) s_star += 0.06;

    // Isolate the continuation among the cone directions of z1 by the causal
    // shadow edge of z1' (sigma-shifted membership test).
    double omega0 = std::atan2(gdot(2), gdot(1));
    const double sigma = 1e-9;
    auto chi = [&](double w) {
      Vec y = cone_point(field, z1, w, s_star);
      y(0) += sigma;
      return field(z1p, y) > 0.0;
    };
    if (!chi(omega0))
      fail(ErrorKind::stall, "exterior_lightlike_traveltime: generator lost at the step point");
    auto edge = [&](double sign) {
      double lo = omega0, hi = omega0 + sign * 0.25;
      if (chi(hi))
        fail(ErrorKind::resolution, "exterior_lightlike_traveltime: shadow edge not bracketed");
      for (int it = 0; it < 48; ++it) {
        double mid = 0.5 * (lo + hi);
        (chi(mid) ? lo : hi) = mid;
      }
      return 0.5 * (lo + hi);
    };
    double omega_star = 0.5 * (edge(+1.0) + edge(-1.0));
    Vec y_star = cone_point(field, z1, omega_star, s_star);

    // Gradient-trick recovery of parameter and direction at the far side.
    std::vector<Vec> approach;
    for (int j = 0; j < 9; ++j) {
      Vec yj = y_star;
      yj(0) += 0.03 / std::pow(2.0, j);
      approach.push_back(yj);
    }
    NullDirectionRecovery rec = recover_null_direction_via_gradient(field, z1, y_star, approach);
    double kpar = rec.u.dot(gdot) / gdot.squaredNorm();
    if (kpar <= 0.0)
      fail(ErrorKind::recovery, "exterior_lightlike_traveltime: non-positive parameter advance");
    double advance = (t1 - eps) + kpar;
    if (advance < 0.25 * out.i0_estimate)
      fail(ErrorKind::stall,
           "exterior_lightlike_traveltime: advance below the certified lower bound");
    total += advance;
    cur_x = y_star;
    cur_v = rec.w / kpar;
    ++out.advances;
  }
  fail(ErrorKind::non_terminating, "exterior_lightlike_traveltime: too many legs");
}

std::vector<LightconePoint> boundary_lightcone_id(
    const TimeSeparationField& d_field, const TimeSeparationField& d_ext, const Vec& x,
    const std::vector<double>& t_grid, const std::vector<double>& theta_grid,
    const CatalogScenario& cat, double tol, bool theta_periodic) {
  const int nt = static_cast<int>(t_grid.size());
  const int nth = static_cast<int>(theta_grid.size());
  std::vector<std::vector<double>> D(nt, std::vector<double>(nth));
  for (int i = 0; i < nt; ++i)
    for (int j = 0; j < nth; ++j)
      D[i][j] = d_field(x, cat.boundary_point(0, t_grid[i], theta_grid[j]));

  bool any_positive = false, any_nonpositive = false;
  std::vector<LightconePoint> out;
  for (int i = 0; i < nt; ++i)
    for (int j = 0; j < nth; ++j) {
      bool here = D[i][j] > tol;
      (here ? any_positive : any_nonpositive) = true;
      bool boundary_cell = false;
      auto check = [&](int ii, int jj) {
        if (ii < 0 || ii >= nt) return;
        if (theta_periodic)
          jj = (jj + nth) % nth;
        else if (jj < 0 || jj >= nth)
          return;
        if ((D[ii][jj] > tol) != here) boundary_cell = true;
      };
      check(i - 1, j);
      check(i + 1, j);
      check(i, j - 1);
      check(i, j + 1);
      if (!boundary_cell) continue;
      Vec p = cat.boundary_point(0, t_grid[i], theta_grid[j]);
      if (d_ext(x, p) <= tol) out.push_back({i, j, p});
    }
  if (!any_positive || !any_nonpositive)
    fail(ErrorKind::resolution, "boundary_lightcone_id: grid too coarse to resolve the level set");
  return out;
}

Vec isometry_map_point(const CatalogScenario& m1, const CatalogScenario& m2,
                       const ExteriorMap& phi0, const Vec& x, const Vec& null_dir,
                       double* t_exit) {
  TraceOptions topts;
  topts.stop_at_first_event = true;
  GeodesicTrace back =
      trace_through_domain(m1.metric, m1.domain, {x, -null_dir, std::nullopt}, 50.0, topts);
  if (back.events.empty())
    fail(ErrorKind::non_terminating, "isometry_map_point: past-pointing geodesic does not exit");
  const BoundaryEvent& ev = back.events.front();
  double t = ev.t;
  Vec y = ev.point;
  Vec w = -ev.velocity;  // future-pointing at the backward exit
  if (t_exit) *t_exit = t;

  Vec y2 = phi0.map(y);
  Vec w2 = phi0.differential(y) * w;
  GeodesicTrace fwd = integrate_geodesic(m2.metric, {y2, w2, std::nullopt}, t);
  return fwd.state_at(t).x;
}

IsometryCandidate construct_isometry(const CatalogScenario& m1, const CatalogScenario& m2,
                                     const ExteriorMap& phi0, const ScatteringTable& data1,
                                     const ScatteringTable& data2,
                                     const std::vector<Vec>& interior_samples, double iso_tol) {
  // Validate that the tables are matched under phi0.
  if (data1.samples.size() != data2.samples.size())
    fail(ErrorKind::inconsistency, "construct_isometry: tables have different sizes");
  for (std::size_t i = 0; i < data1.samples.size(); ++i) {
    const auto& a = data1.samples[i];
    const auto& b = data2.samples[i];
    double err = (phi0.map(a.inbound.base) - b.inbound.base).norm() +
                 (phi0.differential(a.inbound.base) * a.inbound.vec - b.inbound.vec).norm() +
                 (phi0.map(a.outbound.base) - b.outbound.base).norm() +
                 (phi0.differential(a.outbound.base) * a.outbound.vec - b.outbound.vec).norm() +
                 std::abs(a.tau - b.tau);
    if (err > 1e-6)
      fail(ErrorKind::inconsistency,
           "construct_isometry: pushforward of table 1 does not match table 2");
  }

  IsometryCandidate cand;
  for (const Vec& x : interior_samples) {
    // Two distinct null directions probe the locally-constant property.
    Vec v1(3), v2(3);
    v1 << 1.0, 1.0, 0.0;
    v2 << 1.0, -0.44721359549995793, 0.89442719099991586;
    double t1 = 0.0;
    Vec p1 = isometry_map_point(m1, m2, phi0, x, v1, &t1);
    Vec p2 = isometry_map_point(m1, m2, phi0, x, v2, nullptr);
    double disc = (p1 - p2).norm();
    cand.max_direction_discrepancy = std::max(cand.max_direction_discrepancy, disc);
    if (disc > iso_tol)
      fail(ErrorKind::inconsistency,
           "construct_isometry: direction discrepancy above iso_tol (mismatched data)");
    cand.samples.push_back({x, p1, t1});
  }
  return cand;
}

double verify_isometry(IsometryCandidate& candidate, const CatalogScenario& m1,
                       const CatalogScenario& m2, const std::function<Vec(const Vec&)>& rebuild,
                       double fd_h) {
  if (candidate.samples.size() < 10)
    fail(ErrorKind::precondition, "verify_isometry: need at least 10 samples");
  const int n = m1.metric.dimension;
  double worst = 0.0;
  for (const auto& s : candidate.samples) {
    Mat D(n, n);
    Vec xp = s.x, xm = s.x;
    for (int i = 0; i < n; ++i) {
      xp(i) = s.x(i) + fd_h;
      xm(i) = s.x(i) - fd_h;
      D.col(i) = (rebuild(xp) - rebuild(xm)) / (2.0 * fd_h);
      xp(i) = s.x(i);
      xm(i) = s.x(i);
    }
    Mat g1 = m1.metric.metric(s.x);
    Mat g2 = m2.metric.metric(s.phi_x);
    double err = (g1 - D.transpose() * g2 * D).norm() / g1.norm();
    // A displaced stored sample shows up against the reconstruction.
    err = std::max(err, (rebuild(s.x) - s.phi_x).norm());
    worst = std::max(worst, err);
  }
  candidate.max_pullback_error = worst;
  return worst;
}

}  // namespace lenslab
