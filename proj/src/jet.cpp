// lenslab - jet reconstruction from travel-time probes
#include "lenslab/jet.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <map>

namespace lenslab {

Rational factorial(int n) {
  BigInt f = 1;
  for (int i = 2; i <= n; ++i) f *= i;
  return Rational(f);
}

Rational series_sum(int m) {
  if (m < 1) fail(ErrorKind::precondition, "series_sum: m must be >= 1");
  Rational s = 0;
  for (int j = 0; j <= m - 1; ++j) {
    Rational term = Rational(1) / (Rational(m + j) * Rational(m + j + 1));
    term /= factorial(m - j - 1) * factorial(j);
    if (j % 2 == 1) term = -term;
    s += term;
  }
  return s;
}

namespace {

using TermKey = std::tuple<int, int, int>;  // (j, k, d)

std::vector<SymbolicTerm> to_sorted_terms(const std::map<TermKey, Rational>& acc) {
  std::vector<SymbolicTerm> out;
  for (const auto& [key, coeff] : acc) {
    if (coeff == 0) continue;
    out.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key), coeff});
  }
  return out;
}

}  // namespace

std::vector<SymbolicTerm> expansion_recurrence(int l) {
  if (l < 0) fail(ErrorKind::precondition, "expansion_recurrence: l must be >= 0");
  std::map<TermKey, Rational> acc;
  acc[{0, 1, 0}] = 1;
  for (int step = 0; step < l; ++step) {
    std::map<TermKey, Rational> next;
    for (const auto& [key, coeff] : acc) {
      auto [j, k, d] = key;
      if (j > 0) next[{j - 1, k, d + 1}] += coeff * j;  // j K R^{j-1,k}
      next[{j + 1, k + 1, d}] += coeff;                 // R^{j+1,k+1}
    }
    acc = std::move(next);
  }
  return to_sorted_terms(acc);
}

std::vector<SymbolicTerm> expansion_closed_form(int l) {
  if (l < 0) fail(ErrorKind::precondition, "expansion_closed_form: l must be >= 0");
  std::map<TermKey, Rational> acc;
  for (int d = 0; d <= l / 2; ++d) {
    Rational coeff = factorial(l) / (factorial(l - 2 * d) * factorial(d));
    coeff /= Rational(BigInt(1) << d);
    acc[{l - 2 * d, 1 + l - d, d}] = coeff;
  }
  return to_sorted_terms(acc);
}

KMonomial jet_coefficient_symbolic(int m) {
  if (m < 1) fail(ErrorKind::precondition, "jet_coefficient_symbolic: m must be >= 1");
  Rational c = Rational(1, 2) * factorial(m) / factorial(2 * m);
  BigInt two_pow = BigInt(1) << (m + 1);
  Rational sign = (m + 1) % 2 == 0 ? Rational(1) : Rational(-1);
  c *= sign * Rational(two_pow);
  return {c, -(m + 1)};
}

KMonomial assemble_coefficient(int m) {
  if (m < 1) fail(ErrorKind::precondition, "assemble_coefficient: m must be >= 1");
  Rational total = 0;
  for (int j = 0; j <= m - 1; ++j) {
    // C_j carries K^j; (-2 K^{-1})^{m+j+1} carries K^{-(m+j+1)}.
    Rational cj = Rational(1, 2) * factorial(m + j - 1) /
                  (factorial(m - j - 1) * factorial(j) * Rational(BigInt(1) << j));
    Rational pow2 = Rational(BigInt(1) << (m + j + 1));
    Rational sign = (m + j + 1) % 2 == 0 ? Rational(1) : Rational(-1);
    total += cj * sign * pow2 / factorial(m + j + 1);
  }
  return {total, -(m + 1)};
}

double jet_coefficient(int m, double K) {
  if (K == 0.0) fail(ErrorKind::convexity, "jet_coefficient: K = 0 violates strict convexity");
  KMonomial sym = jet_coefficient_symbolic(m);
  return static_cast<double>(sym.coeff) * std::pow(K, sym.k_power);
}

std::vector<double> log_spaced_eps(double eps_max, int count, double decades) {
  std::vector<double> out;
  for (int i = 0; i < count; ++i)
    out.push_back(eps_max * std::pow(10.0, -decades * (count - 1 - i) / (count - 1)));
  return out;
}

JetProbe probe_travel_time(const ChartMetric& m, const DomainSpec& d, const Vec& p, const Vec& v,
                           const std::vector<double>& eps_grid, double t_max, double ode_tol) {
  JetProbe probe;
  probe.base = p;
  probe.direction = v;
  probe.convexity = second_fundamental_form(m, d, p, v);
  if (probe.convexity <= 0.0)
    fail(ErrorKind::precondition,
         "probe_travel_time: direction is not strictly convex (II(v,v) <= 0)");
  probe.K = -probe.convexity;  // K = (1/2) d_n g_ab v^a v^b = -II(v,v)

  ScatteringOptions opts;
  opts.tol = ode_tol;
  for (double eps : eps_grid) {
    Vec ve = probe_direction(m, d, p, v, eps);
    try {
      ScatteringSample s = complete_scattering(m, d, {p, ve, std::nullopt}, t_max, opts);
      probe.epsilons.push_back(eps);
      probe.taus.push_back(s.tau);
    } catch (const Error&) {
      probe.trimmed.push_back(eps);  // tangential or non-returning probe
    }
  }
  if (probe.epsilons.empty())
    fail(ErrorKind::precondition, "probe_travel_time: no usable probes");
  return probe;
}

namespace {

struct WeightedFit {
  std::vector<double> coeffs;
  std::vector<double> sigma;
  double condition;
  double residual;
};

WeightedFit weighted_polynomial_fit(const std::vector<double>& eps, const std::vector<double>& tau,
                                    int order, double eps_scale) {
  const int n = static_cast<int>(eps.size());
  Mat A(n, order);
  Vec rhs(n);
  for (int i = 0; i < n; ++i) {
    double w = 1.0 / std::max(std::abs(tau[i]), 1e-300);  // relative residuals
    double z = eps[i] / eps_scale;
    double zk = z;
    for (int k = 0; k < order; ++k) {
      A(i, k) = w * zk;
      zk *= z;
    }
    rhs(i) = w * tau[i];
  }
  Eigen::JacobiSVD<Mat> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
  double cond = svd.singularValues()(0) / svd.singularValues()(order - 1);
  if (cond > 1e12)
    fail(ErrorKind::ill_conditioned,
         "fit_expansion: condition number above 1e12; use a smaller eps_max or a tighter "
         "integrator tolerance");
  Vec b = svd.solve(rhs);
  double resid = (A * b - rhs).norm() / std::sqrt(std::max(1, n - order));

  // Covariance of the scaled coefficients from the SVD factors.
  Vec diag = Vec::Zero(order);
  for (int k = 0; k < order; ++k)
    for (int l = 0; l < order; ++l) {
      double sv = svd.singularValues()(l);
      diag(k) += (svd.matrixV()(k, l) / sv) * (svd.matrixV()(k, l) / sv);
    }

  WeightedFit out;
  out.condition = cond;
  out.residual = resid;
  double scale_pow = eps_scale;
  for (int k = 0; k < order; ++k) {
    out.coeffs.push_back(b(k) / scale_pow);
    out.sigma.push_back(resid * std::sqrt(diag(k)) / scale_pow);
    scale_pow *= eps_scale;
  }
  return out;
}

}  // namespace

FitResult fit_expansion(const JetProbe& probe, int order) {
  const int n = static_cast<int>(probe.epsilons.size());
  if (n < 2 * order)
    fail(ErrorKind::precondition, "fit_expansion: need at least 2*order grid points");
  double eps_scale = *std::max_element(probe.epsilons.begin(), probe.epsilons.end());
  WeightedFit full = weighted_polynomial_fit(probe.epsilons, probe.taus, order, eps_scale);

  // Richardson cross-check: refit on the even-index sub-grid.
  std::vector<double> e2, t2;
  for (int i = 0; i < n; i += 2) {
    e2.push_back(probe.epsilons[i]);
    t2.push_back(probe.taus[i]);
  }
  FitResult out;
  out.coefficients = full.coeffs;
  out.sigma = full.sigma;
  out.condition = full.condition;
  out.residual = full.residual;
  if (static_cast<int>(e2.size()) >= order + 2) {
    WeightedFit half = weighted_polynomial_fit(e2, t2, order, eps_scale);
    for (int k = 0; k < order; ++k)
      out.richardson_delta.push_back(std::abs(half.coeffs[k] - full.coeffs[k]));
  }
  return out;
}

M1Recovery recover_m1(const FitResult& fit) {
  if (fit.coefficients.empty()) fail(ErrorKind::precondition, "recover_m1: empty fit");
  double a1 = fit.coefficients[0];
  if (std::abs(a1) < 1e-12)
    fail(ErrorKind::convexity, "recover_m1: leading coefficient vanishes (convexity violation)");
  if (fit.sigma[0] > 1e-4 * std::abs(a1))
    fail(ErrorKind::precondition, "recover_m1: a1 uncertainty above 1e-4 relative");
  M1Recovery out;
  out.a1 = a1;
  out.K = -2.0 / a1;
  out.dn_g_vv = 2.0 * out.K;
  return out;
}

LinearityReport verify_jet_linearity(int m, double q_tt, double q_ttheta, double q_thetatheta,
                                     double b, const std::vector<double>& s_grid, double eps_max,
                                     int eps_count, int fit_order, double R) {
  if (m < 2) fail(ErrorKind::precondition, "verify_jet_linearity: m must be >= 2");
  if (s_grid.size() < 2)
    fail(ErrorKind::precondition, "verify_jet_linearity: need at least two perturbation strengths");
  // 2m+1 captures the target coefficient; the extra orders absorb Taylor
  // truncation that would otherwise leak into it.
  if (fit_order == 0) fit_order = 2 * m + 5;
  eps_count = std::max(eps_count, 2 * fit_order + 4);

  LinearityReport rep;
  rep.m = m;
  auto eps_grid = log_spaced_eps(eps_max, eps_count, 1.3);

  double K = 0.0;
  for (double s : s_grid) {
    auto cat = make_catalog("jet_perturbed", {{"R", R},
                                              {"m", double(m)},
                                              {"s", s},
                                              {"q_tt", q_tt},
                                              {"q_ttheta", q_ttheta},
                                              {"q_thetatheta", q_thetatheta}});
    Vec p(3), v(3);
    p << 0.0, 0.0, 0.0;
    v << 1.0, 0.0, b / R;  // e_t + b e_theta in the normal chart
    JetProbe probe = probe_travel_time(cat.metric, cat.domain, p, v, eps_grid);
    K = probe.K;  // base-metric K; the perturbation vanishes to order m at u=0
    FitResult fit = fit_expansion(probe, fit_order);
    rep.s_values.push_back(s);
    rep.coefficient_values.push_back(fit.coefficients[2 * m - 2]);  // a_{2m-1}
  }

  // Linear fit a_{2m-1}(s) = c0 + slope * s.
  const int ns = static_cast<int>(s_grid.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (int i = 0; i < ns; ++i) {
    sx += rep.s_values[i];
    sy += rep.coefficient_values[i];
    sxx += rep.s_values[i] * rep.s_values[i];
    sxy += rep.s_values[i] * rep.coefficient_values[i];
  }
  double denom = ns * sxx - sx * sx;
  rep.measured_slope = (ns * sxy - sx * sy) / denom;
  double c0 = (sy - rep.measured_slope * sx) / ns;
  double ss = 0.0;
  for (int i = 0; i < ns; ++i) {
    double r = rep.coefficient_values[i] - c0 - rep.measured_slope * rep.s_values[i];
    ss += r * r;
  }
  double slope_sigma = std::sqrt(ss / std::max(1, ns - 2)) * std::sqrt(double(ns) / denom);
  rep.slope_sigma_rel = std::abs(slope_sigma / rep.measured_slope);

  double vt = 1.0, vth = b / R;
  double qvv = q_tt * vt * vt + 2.0 * q_ttheta * vt * vth + q_thetatheta * vth * vth;
  rep.predicted_slope = jet_coefficient(m, K) * qvv;
  rep.relative_deviation = qvv == 0.0
                               ? std::abs(rep.measured_slope)
                               : std::abs(rep.measured_slope - rep.predicted_slope) /
                                     std::abs(rep.predicted_slope);
  if (rep.slope_sigma_rel > 0.1 && qvv != 0.0)
    fail(ErrorKind::inconclusive,
         "verify_jet_linearity: slope fit uncertainty above 10 percent");
  return rep;
}

}  // namespace lenslab
