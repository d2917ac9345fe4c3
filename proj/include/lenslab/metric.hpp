// lenslab - chart metrics, domains, boundary frames, catalog models
#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lenslab/common.hpp"

namespace lenslab {

enum class SignatureKind { riemannian, lorentzian };
enum class CausalClass { timelike, lightlike, spacelike, zero };
enum class PointClass { interior, boundary, exterior };

struct MetricAt {
  Mat g;
  Mat g_inv;
};

// A semi-Riemannian metric on a single coordinate chart. Immutable after
// construction; all evaluation is pure.
class ChartMetric {
public:
  int dimension = 0;
  SignatureKind signature = SignatureKind::lorentzian;
  std::function<Mat(const Vec&)> metric_eval;
  // Optional analytic derivative: dg[k](i,j) = d_k g_ij. Finite differences
  // of metric_eval are used when absent.
  std::function<Tensor3(const Vec&)> metric_derivative;
  std::string catalog_id;

  Mat metric(const Vec& x) const;
  MetricAt metric_with_inverse(const Vec& x) const;
  Tensor3 metric_derivatives(const Vec& x) const;
  Tensor3 metric_derivatives_fd(const Vec& x) const;
  Tensor3 christoffel(const Vec& x) const;

  double inner(const Vec& x, const Vec& u, const Vec& w) const;
  CausalClass classify(const Vec& x, const Vec& v) const;
  // Future orientation: all Lorentzian catalogs are time-oriented by the
  // first chart coordinate.
  bool future_pointing(const Vec& v) const { return v(0) > 0.0; }
};

struct TangentVec {
  Vec base;
  Vec vec;
  std::optional<CausalClass> causal_class;
};

struct AxisBox {
  Vec lo;
  Vec hi;
  bool contains(const Vec& x) const;
};

// Boundary-defining data: interior <=> phi > 0.
struct DomainSpec {
  std::function<double(const Vec&)> defining_fn;
  std::function<Vec(const Vec&)> defining_gradient;
  double collar_width = 0.2;
  AxisBox chart_bounds;

  double phi(const Vec& x) const { return defining_fn(x); }
  Vec dphi(const Vec& x) const { return defining_gradient(x); }
  PointClass classify(const Vec& x, double tol = defaults::event_tol) const;
  bool in_chart(const Vec& x) const { return chart_bounds.contains(x); }
  // Approximate distance to the boundary (phi normalized by |dphi|); used for
  // collar membership tests.
  double boundary_distance(const Vec& x) const;
  bool in_collar(const Vec& x) const;
};

struct BoundaryFrame {
  Vec point;
  Vec outward_normal;           // unit, g(nu,nu) = +1
  std::vector<Vec> tangent_basis;  // spans ker dphi, g-orthogonal to nu
  // For Lorentzian timelike boundaries the basis is g-orthonormalized with
  // tangent_basis[0] the unit timelike leg.
};

MetricAt eval_metric(const ChartMetric& m, const DomainSpec& d, const Vec& x);
Tensor3 christoffel(const ChartMetric& m, const DomainSpec& d, const Vec& x);
CausalClass causal_class(const ChartMetric& m, const TangentVec& v);
BoundaryFrame boundary_frame(const ChartMetric& m, const DomainSpec& d, const Vec& x);
double second_fundamental_form(const ChartMetric& m, const DomainSpec& d, const Vec& x,
                               const Vec& v);
// Inward unit normal (minus the outward one); the jet probes tilt into it.
Vec inward_normal(const ChartMetric& m, const DomainSpec& d, const Vec& x);

// A catalog scenario: metric + domain + boundary parameterization helpers.
struct CatalogScenario {
  std::string name;
  ChartMetric metric;
  DomainSpec domain;
  std::map<std::string, double> params;
  // boundary_point(component, u0, u1): chart point on boundary component
  // (0 = outer, 1 = inner where present); u0 is coordinate time, u1 the
  // angular/lateral boundary coordinate.
  std::function<Vec(int, double, double)> boundary_point;
  int boundary_components = 1;
  double injectivity_scale = 1.0;
  // Chart coordinates that are periodic identifications (dim index, period);
  // path optimizers consider shifted representatives of the target.
  std::vector<std::pair<int, double>> periodic_dims;
};

// Catalog names: minkowski_slab(L,n), minkowski_cylinder(R), minkowski_annulus(r0,R),
// minkowski_polar(R), cylinder_normal(R), product_sphere, product_conformal(amp,width,R),
// jet_perturbed(m,s,q_tt,q_ttheta,q_thetatheta on the cylinder_normal base).
CatalogScenario make_catalog(const std::string& name,
                             const std::map<std::string, double>& params = {});

}  // namespace lenslab
