// lenslab - boundary jet reconstruction: exact expansion combinatorics and
// travel-time probes near a strictly convex direction
#pragma once

#include <boost/multiprecision/cpp_int.hpp>

#include "lenslab/scattering.hpp"

namespace lenslab {

using BigInt = boost::multiprecision::cpp_int;
using Rational = boost::multiprecision::cpp_rational;

// One term coeff * K^d * R^{j,k}: j the power of v^n, k the highest normal
// derivative order carried.
struct SymbolicTerm {
  int j = 0;
  int k = 0;
  int d = 0;
  Rational coeff;
};

// A rational multiple of an integer power of K.
struct KMonomial {
  Rational coeff;
  int k_power = 0;
  bool operator==(const KMonomial& o) const { return coeff == o.coeff && k_power == o.k_power; }
};

Rational factorial(int n);
// S_m = sum_j (-1)^j / ((m+j)(m+j+1)(m-j-1)! j!), exactly m!/(2m)!.
Rational series_sum(int m);
// Apply V(R^{j,k}) = j K R^{j-1,k} + R^{j+1,k+1} l times to R^{0,1}.
std::vector<SymbolicTerm> expansion_recurrence(int l);
// Closed form sum_d l!/((l-2d)! d! 2^d) K^d R^{l-2d, 1+l-d}.
std::vector<SymbolicTerm> expansion_closed_form(int l);

// Coefficient of eps^{2m-1} d_n^m g_ab v^a v^b in tau(eps):
// (1/2) (-2 K^{-1})^{m+1} m!/(2m)!.
KMonomial jet_coefficient_symbolic(int m);
// The same coefficient assembled from C_j = (1/2)(m+j-1)!/((m-j-1)! j! 2^j) K^j
// through sum_j C_j/(m+j+1)! (-2K^{-1})^{m+j+1}.
KMonomial assemble_coefficient(int m);
double jet_coefficient(int m, double K);

struct JetProbe {
  Vec base;
  Vec direction;                  // boundary-tangent v
  std::vector<double> epsilons;   // kept probes
  std::vector<double> taus;
  std::vector<double> trimmed;    // epsilons removed for tangential exits
  double convexity = 0.0;         // II(v,v)
  double K = 0.0;                 // (1/2) d_n g_ab v^a v^b, from the catalog
};

std::vector<double> log_spaced_eps(double eps_max = defaults::eps_max,
                                   int count = defaults::eps_points,
                                   double decades = 2.0);

JetProbe probe_travel_time(const ChartMetric& m, const DomainSpec& d, const Vec& p, const Vec& v,
                           const std::vector<double>& eps_grid, double t_max = 10.0,
                           double ode_tol = defaults::probe_ode_tol);

struct FitResult {
  std::vector<double> coefficients;  // a_1..a_order of tau = sum a_k eps^k
  std::vector<double> sigma;         // one-standard-deviation uncertainties
  double condition = 0.0;
  double residual = 0.0;
  std::vector<double> richardson_delta;  // coefficient shift on the nested sub-grid
};

FitResult fit_expansion(const JetProbe& probe, int order);

struct M1Recovery {
  double a1 = 0.0;
  double K = 0.0;
  double dn_g_vv = 0.0;  // 2K = d_n g_ab v^a v^b
};

M1Recovery recover_m1(const FitResult& fit);

struct JetEntry {
  int m = 0;
  double value = 0.0;
  double sigma = 0.0;
};

struct JetResult {
  Vec base_point;
  Vec direction;
  double K = 0.0;
  std::vector<JetEntry> entries;
  FitResult fit;
};

struct LinearityReport {
  int m = 0;
  double measured_slope = 0.0;
  double predicted_slope = 0.0;
  double relative_deviation = 0.0;
  double slope_sigma_rel = 0.0;
  std::vector<double> s_values;
  std::vector<double> coefficient_values;  // a_{2m-1}(s)
};

// Perturbation-linearity protocol on the cylinder base: the slope of the
// eps^{2m-1} coefficient in s must equal jet_coefficient(m, K) q(v,v).
LinearityReport verify_jet_linearity(int m, double q_tt, double q_ttheta, double q_thetatheta,
                                     double b, const std::vector<double>& s_grid,
                                     double eps_max = defaults::eps_max,
                                     int eps_count = defaults::eps_points, int fit_order = 0,
                                     double R = 1.0);

}  // namespace lenslab
