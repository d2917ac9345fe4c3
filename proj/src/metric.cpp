// lenslab - metric evaluation, boundary frames, catalog construction
#include "lenslab/metric.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

namespace lenslab {

namespace {

Mat symmetrized_checked(const Mat& g, const std::string& who) {
  double scale = g.norm();
  double asym = (g - g.transpose()).norm();
  if (scale > 0.0 && asym > 1e-12 * scale)
    fail(ErrorKind::degeneracy, who + ": metric_eval returned an asymmetric matrix");
  return 0.5 * (g + g.transpose());
}

void check_signature(const Mat& g, SignatureKind sig, const std::string& who) {
  Eigen::SelfAdjointEigenSolver<Mat> es(g, Eigen::EigenvaluesOnly);
  const Vec& ev = es.eigenvalues();
  int negatives = 0;
  for (int i = 0; i < ev.size(); ++i) {
    if (ev(i) < 0.0) ++negatives;
    if (std::abs(ev(i)) < 1e-14) fail(ErrorKind::degeneracy, who + ": numerically singular metric");
  }
  int expected = (sig == SignatureKind::lorentzian) ? 1 : 0;
  if (negatives != expected)
    fail(ErrorKind::signature, who + ": eigenvalue signs do not match the declared signature");
}

}  // namespace

bool AxisBox::contains(const Vec& x) const {
  for (int i = 0; i < x.size(); ++i)
    if (x(i) < lo(i) || x(i) > hi(i)) return false;
  return true;
}

Mat ChartMetric::metric(const Vec& x) const {
  Mat g = symmetrized_checked(metric_eval(x), catalog_id.empty() ? "metric" : catalog_id);
  return g;
}

MetricAt ChartMetric::metric_with_inverse(const Vec& x) const {
  MetricAt out;
  out.g = metric(x);
  Eigen::FullPivLU<Mat> lu(out.g);
  if (!lu.isInvertible())
    fail(ErrorKind::degeneracy, "metric_with_inverse: numerically singular metric");
  out.g_inv = lu.inverse();
  double resid = (out.g * out.g_inv - Mat::Identity(dimension, dimension)).norm();
  if (resid > 1e-10)
    fail(ErrorKind::degeneracy, "metric_with_inverse: inverse residual above 1e-10");
  return out;
}

Tensor3 ChartMetric::metric_derivatives_fd(const Vec& x) const {
  Tensor3 dg(dimension);
  Vec xp = x, xm = x;
  for (int k = 0; k < dimension; ++k) {
    double h = fd_step(x(k));
    xp(k) = x(k) + h;
    xm(k) = x(k) - h;
    dg[k] = (metric_eval(xp) - metric_eval(xm)) / (2.0 * h);
    dg[k] = 0.5 * (dg[k] + dg[k].transpose().eval());
    xp(k) = x(k);
    xm(k) = x(k);
  }
  return dg;
}

Tensor3 ChartMetric::metric_derivatives(const Vec& x) const {
  if (metric_derivative) return metric_derivative(x);
  return metric_derivatives_fd(x);
}

Tensor3 ChartMetric::christoffel(const Vec& x) const {
  MetricAt ma = metric_with_inverse(x);
  Tensor3 dg = metric_derivatives(x);
  Tensor3 gamma(dimension, Mat::Zero(dimension, dimension));
  for (int k = 0; k < dimension; ++k)
    for (int i = 0; i < dimension; ++i)
      for (int j = i; j < dimension; ++j) {
        double s = 0.0;
        for (int l = 0; l < dimension; ++l)
          s += ma.g_inv(k, l) * (dg[i](l, j) + dg[j](l, i) - dg[l](i, j));
        gamma[k](i, j) = 0.5 * s;
        gamma[k](j, i) = gamma[k](i, j);
      }
  return gamma;
}

double ChartMetric::inner(const Vec& x, const Vec& u, const Vec& w) const {
  return u.dot(metric(x) * w);
}

CausalClass ChartMetric::classify(const Vec& x, const Vec& v) const {
  if (signature != SignatureKind::lorentzian)
    fail(ErrorKind::signature, "causal classification requires a Lorentzian metric");
  double n2 = v.squaredNorm();
  if (n2 == 0.0) return CausalClass::zero;
  double q = inner(x, v, v);
  double band = defaults::class_tol * n2;
  if (q < -band) return CausalClass::timelike;
  if (q <= band) return CausalClass::lightlike;
  return CausalClass::spacelike;
}

PointClass DomainSpec::classify(const Vec& x, double tol) const {
  double p = phi(x);
  if (std::abs(p) < tol) return PointClass::boundary;
  return p > 0.0 ? PointClass::interior : PointClass::exterior;
}

double DomainSpec::boundary_distance(const Vec& x) const {
  double p = phi(x);
  double grad = dphi(x).norm();
  if (grad < 1e-12) return std::abs(p) > 0.0 ? 1e30 : 0.0;
  return std::abs(p) / grad;
}

bool DomainSpec::in_collar(const Vec& x) const {
  return phi(x) > -defaults::event_tol && boundary_distance(x) < collar_width;
}

MetricAt eval_metric(const ChartMetric& m, const DomainSpec& d, const Vec& x) {
  if (!d.in_chart(x)) fail(ErrorKind::domain, "eval_metric: point outside chart bounds");
  MetricAt ma = m.metric_with_inverse(x);
  check_signature(ma.g, m.signature, m.catalog_id);
  return ma;
}

Tensor3 christoffel(const ChartMetric& m, const DomainSpec& d, const Vec& x) {
  if (!d.in_chart(x)) fail(ErrorKind::domain, "christoffel: point outside chart bounds");
  return m.christoffel(x);
}

CausalClass causal_class(const ChartMetric& m, const TangentVec& v) {
  return m.classify(v.base, v.vec);
}

BoundaryFrame boundary_frame(const ChartMetric& m, const DomainSpec& d, const Vec& x) {
  if (std::abs(d.phi(x)) >= defaults::event_tol * 10.0 && d.boundary_distance(x) > 1e-7)
    fail(ErrorKind::precondition, "boundary_frame: point is not on the boundary");
  Vec grad = d.dphi(x);
  if (grad.norm() < 1e-8) fail(ErrorKind::degeneracy, "boundary_frame: dphi vanishes");

  MetricAt ma = m.metric_with_inverse(x);
  Vec w = ma.g_inv * grad;  // raised gradient, g-orthogonal to ker dphi
  double nn = w.dot(ma.g * w);
  if (nn <= 1e-12)
    fail(ErrorKind::signature, "boundary_frame: normal direction is not spacelike");
  Vec nu = -w / std::sqrt(nn);  // dphi(nu) < 0: outward under interior <=> phi > 0

  const int n = m.dimension;
  // Basis of ker dphi from the SVD of the single-row constraint.
  Mat row(1, n);
  row.row(0) = grad.transpose();
  Eigen::JacobiSVD<Mat> svd(row, Eigen::ComputeFullV);
  std::vector<Vec> raw;
  for (int i = 1; i < n; ++i) raw.push_back(svd.matrixV().col(i));

  // g-orthonormalize inside the boundary tangent space.
  Mat gram(n - 1, n - 1);
  for (int i = 0; i < n - 1; ++i)
    for (int j = 0; j < n - 1; ++j) gram(i, j) = raw[i].dot(ma.g * raw[j]);
  Eigen::SelfAdjointEigenSolver<Mat> es(gram);
  std::vector<Vec> basis;
  int negatives = 0;
  for (int i = 0; i < n - 1; ++i) {
    double lam = es.eigenvalues()(i);
    if (std::abs(lam) < 1e-10)
      fail(ErrorKind::signature, "boundary_frame: induced metric is degenerate on ker dphi");
    Vec e = Vec::Zero(n);
    for (int j = 0; j < n - 1; ++j) e += es.eigenvectors()(j, i) * raw[j];
    e /= std::sqrt(std::abs(lam));
    if (lam < 0.0) {
      ++negatives;
      if (!m.future_pointing(e)) e = -e;
      basis.insert(basis.begin(), e);
    } else {
      basis.push_back(e);
    }
  }
  if (m.signature == SignatureKind::lorentzian && negatives != 1)
    fail(ErrorKind::signature, "boundary_frame: boundary is not timelike at this point");
  if (m.signature == SignatureKind::riemannian && negatives != 0)
    fail(ErrorKind::signature, "boundary_frame: unexpected timelike boundary direction");

  BoundaryFrame out;
  out.point = x;
  out.outward_normal = nu;
  out.tangent_basis = std::move(basis);
  return out;
}

Vec inward_normal(const ChartMetric& m, const DomainSpec& d, const Vec& x) {
  return -boundary_frame(m, d, x).outward_normal;
}

double second_fundamental_form(const ChartMetric& m, const DomainSpec& d, const Vec& x,
                               const Vec& v) {
  Vec grad = d.dphi(x);
  if (std::abs(grad.dot(v)) >= 1e-8 * v.norm())
    fail(ErrorKind::precondition, "second_fundamental_form: v is not tangent to the boundary");

  const int n = m.dimension;
  auto nu_field = [&](const Vec& p) -> Vec {
    MetricAt ma = m.metric_with_inverse(p);
    Vec w = ma.g_inv * d.dphi(p);
    double nn = w.dot(ma.g * w);
    if (nn <= 1e-14) fail(ErrorKind::degeneracy, "second_fundamental_form: degenerate normal");
    return -w / std::sqrt(nn);
  };

  // (nabla_v nu)^k = v^i d_i nu^k + Gamma^k_ij v^i nu^j, with d nu by central FD.
  Vec nu = nu_field(x);
  Mat dnu(n, n);  // dnu(k,i) = d_i nu^k
  Vec xp = x, xm = x;
  for (int i = 0; i < n; ++i) {
    double h = fd_step(x(i));
    xp(i) = x(i) + h;
    xm(i) = x(i) - h;
    dnu.col(i) = (nu_field(xp) - nu_field(xm)) / (2.0 * h);
    xp(i) = x(i);
    xm(i) = x(i);
  }
  Tensor3 gamma = m.christoffel(x);
  Vec cov = Vec::Zero(n);
  for (int k = 0; k < n; ++k) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
      s += v(i) * dnu(k, i);
      for (int j = 0; j < n; ++j) s += gamma[k](i, j) * v(i) * nu(j);
    }
    cov(k) = s;
  }
  return cov.dot(m.metric(x) * v);
}

// ---------------------------------------------------------------------------
// Catalog construction
// ---------------------------------------------------------------------------

namespace {

double param(const std::map<std::string, double>& p, const std::string& key, double fallback) {
  auto it = p.find(key);
  return it == p.end() ? fallback : it->second;
}

AxisBox box3(double t, double a0, double a1, double b0, double b1) {
  AxisBox box;
  box.lo = Vec(3);
  box.hi = Vec(3);
  box.lo << -t, a0, b0;
  box.hi << t, a1, b1;
  return box;
}

// C-infinity cutoff: 1 on (-inf, a], 0 on [b, inf).
struct Cutoff {
  double a, b;
  static double f(double t) { return t > 0.0 ? std::exp(-1.0 / t) : 0.0; }
  static double fp(double t) { return t > 0.0 ? std::exp(-1.0 / t) / (t * t) : 0.0; }
  double value(double u) const {
    double t1 = (b - u) / (b - a), t2 = (u - a) / (b - a);
    double f1 = f(t1), f2 = f(t2);
    return f1 / (f1 + f2);
  }
  double deriv(double u) const {
    double t1 = (b - u) / (b - a), t2 = (u - a) / (b - a);
    double f1 = f(t1), f2 = f(t2);
    double df1 = -fp(t1) / (b - a), df2 = fp(t2) / (b - a);
    double den = (f1 + f2) * (f1 + f2);
    return (df1 * f2 - f1 * df2) / den;
  }
};

CatalogScenario make_slab(const std::map<std::string, double>& p) {
  CatalogScenario s;
  s.name = "minkowski_slab";
  double L = param(p, "L", 1.0);
  int n = static_cast<int>(param(p, "n", 3.0));
  if (n < 2) fail(ErrorKind::config, "minkowski_slab: n must be >= 2");
  s.params = {{"L", L}, {"n", double(n)}};

  s.metric.dimension = n;
  s.metric.signature = SignatureKind::lorentzian;
  s.metric.catalog_id = s.name;
  Mat g0 = Mat::Identity(n, n);
  g0(0, 0) = -1.0;
  s.metric.metric_eval = [g0](const Vec&) { return g0; };
  s.metric.metric_derivative = [n](const Vec&) { return Tensor3(n, Mat::Zero(n, n)); };

  s.domain.defining_fn = [L, n](const Vec& x) { return x(n - 1) * (L - x(n - 1)) / L; };
  s.domain.defining_gradient = [L, n](const Vec& x) {
    Vec g = Vec::Zero(n);
    g(n - 1) = (L - 2.0 * x(n - 1)) / L;
    return g;
  };
  s.domain.chart_bounds.lo = Vec::Constant(n, -50.0);
  s.domain.chart_bounds.hi = Vec::Constant(n, 50.0);
  s.domain.chart_bounds.lo(n - 1) = -0.6;
  s.domain.chart_bounds.hi(n - 1) = L + 0.6;

  s.boundary_components = 2;
  s.boundary_point = [L, n](int comp, double t, double a) {
    Vec x = Vec::Zero(n);
    x(0) = t;
    if (n > 2) x(1) = a;
    x(n - 1) = comp == 0 ? 0.0 : L;
    return x;
  };
  s.injectivity_scale = L;
  return s;
}

CatalogScenario make_cylinder(const std::map<std::string, double>& p) {
  CatalogScenario s;
  s.name = "minkowski_cylinder";
  double R = param(p, "R", 1.0);
  s.params = {{"R", R}};

  s.metric.dimension = 3;
  s.metric.signature = SignatureKind::lorentzian;
  s.metric.catalog_id = s.name;
  Mat g0 = Mat::Identity(3, 3);
  g0(0, 0) = -1.0;
  s.metric.metric_eval = [g0](const Vec&) { return g0; };
  s.metric.metric_derivative = [](const Vec&) { return Tensor3(3, Mat::Zero(3, 3)); };

  s.domain.defining_fn = [R](const Vec& x) {
    return (R * R - x(1) * x(1) - x(2) * x(2)) / (2.0 * R);
  };
  s.domain.defining_gradient = [R](const Vec& x) {
    Vec g(3);
    g << 0.0, -x(1) / R, -x(2) / R;
    return g;
  };
  s.domain.chart_bounds = box3(50.0, -(R + 0.6), R + 0.6, -(R + 0.6), R + 0.6);

  s.boundary_point = [R](int, double t, double th) {
    Vec x(3);
    x << t, R * std::cos(th), R * std::sin(th);
    return x;
  };
  s.injectivity_scale = R;
  return s;
}

CatalogScenario make_annulus(const std::map<std::string, double>& p) {
  CatalogScenario s;
  s.name = "minkowski_annulus";
  double r0 = param(p, "r0", 0.5);
  double R = param(p, "R", 1.0);
  if (!(0.0 < r0 && r0 < R)) fail(ErrorKind::config, "minkowski_annulus: need 0 < r0 < R");
  s.params = {{"r0", r0}, {"R", R}};

  s.metric.dimension = 3;
  s.metric.signature = SignatureKind::lorentzian;
  s.metric.catalog_id = s.name;
  Mat g0 = Mat::Identity(3, 3);
  g0(0, 0) = -1.0;
  s.metric.metric_eval = [g0](const Vec&) { return g0; };
  s.metric.metric_derivative = [](const Vec&) { return Tensor3(3, Mat::Zero(3, 3)); };

  s.domain.defining_fn = [r0, R](const Vec& x) {
    double r = std::hypot(x(1), x(2));
    return (r - r0) * (R - r);
  };
  s.domain.defining_gradient = [r0, R](const Vec& x) {
    double r = std::hypot(x(1), x(2));
    Vec g = Vec::Zero(3);
    if (r < 1e-12) return g;
    double fp = R + r0 - 2.0 * r;
    g(1) = fp * x(1) / r;
    g(2) = fp * x(2) / r;
    return g;
  };
  s.domain.chart_bounds = box3(50.0, -(R + 0.6), R + 0.6, -(R + 0.6), R + 0.6);

  s.boundary_components = 2;
  s.boundary_point = [r0, R](int comp, double t, double th) {
    double r = comp == 0 ? R : r0;
    Vec x(3);
    x << t, r * std::cos(th), r * std::sin(th);
    return x;
  };
  s.injectivity_scale = R - r0;
  return s;
}

CatalogScenario make_polar(const std::map<std::string, double>& p) {
  CatalogScenario s;
  s.name = "minkowski_polar";
  double R = param(p, "R", 1.0);
  s.params = {{"R", R}};

  s.metric.dimension = 3;
  s.metric.signature = SignatureKind::lorentzian;
  s.metric.catalog_id = s.name;
  s.metric.metric_eval = [](const Vec& x) {
    Mat g = Mat::Zero(3, 3);
    g(0, 0) = -1.0;
    g(1, 1) = 1.0;
    g(2, 2) = x(1) * x(1);
    return g;
  };
  s.metric.metric_derivative = [](const Vec& x) {
    Tensor3 dg(3, Mat::Zero(3, 3));
    dg[1](2, 2) = 2.0 * x(1);
    return dg;
  };

  s.domain.defining_fn = [R](const Vec& x) { return (R * R - x(1) * x(1)) / (2.0 * R); };
  s.domain.defining_gradient = [R](const Vec& x) {
    Vec g(3);
    g << 0.0, -x(1) / R, 0.0;
    return g;
  };
  s.domain.chart_bounds = box3(50.0, 0.05, R + 0.6, -12.6, 12.6);

  s.boundary_point = [R](int, double t, double th) {
    Vec x(3);
    x << t, R, th;
    return x;
  };
  s.injectivity_scale = R;
  s.periodic_dims = {{2, 2.0 * M_PI}};
  return s;
}

CatalogScenario make_cylinder_normal(const std::map<std::string, double>& p) {
  CatalogScenario s;
  s.name = "cylinder_normal";
  double R = param(p, "R", 1.0);
  s.params = {{"R", R}};

  s.metric.dimension = 3;
  s.metric.signature = SignatureKind::lorentzian;
  s.metric.catalog_id = s.name;
  s.metric.metric_eval = [R](const Vec& x) {
    Mat g = Mat::Zero(3, 3);
    g(0, 0) = -1.0;
    g(1, 1) = 1.0;
    double r = R - x(1);
    g(2, 2) = r * r;
    return g;
  };
  s.metric.metric_derivative = [R](const Vec& x) {
    Tensor3 dg(3, Mat::Zero(3, 3));
    dg[1](2, 2) = -2.0 * (R - x(1));
    return dg;
  };

  s.domain.defining_fn = [](const Vec& x) { return x(1); };
  s.domain.defining_gradient = [](const Vec&) {
    Vec g(3);
    g << 0.0, 1.0, 0.0;
    return g;
  };
  s.domain.chart_bounds = box3(50.0, -0.6, R - 0.05, -12.6, 12.6);

  s.boundary_point = [](int, double t, double th) {
    Vec x(3);
    x << t, 0.0, th;
    return x;
  };
  s.injectivity_scale = R;
  s.periodic_dims = {{2, 2.0 * M_PI}};
  return s;
}

CatalogScenario make_product_sphere(const std::map<std::string, double>&) {
  CatalogScenario s;
  s.name = "product_sphere";

  s.metric.dimension = 3;
  s.metric.signature = SignatureKind::lorentzian;
  s.metric.catalog_id = s.name;
  s.metric.metric_eval = [](const Vec& x) {
    Mat g = Mat::Zero(3, 3);
    g(0, 0) = -1.0;
    g(1, 1) = 1.0;
    double sn = std::sin(x(1));
    g(2, 2) = sn * sn;
    return g;
  };
  s.metric.metric_derivative = [](const Vec& x) {
    Tensor3 dg(3, Mat::Zero(3, 3));
    dg[1](2, 2) = std::sin(2.0 * x(1));
    return dg;
  };

  // Boundaryless model: phi is constant positive, used only for cut-locus and
  // conjugate-point experiments.
  s.domain.defining_fn = [](const Vec&) { return 1.0; };
  s.domain.defining_gradient = [](const Vec&) { return Vec::Zero(3); };
  s.domain.chart_bounds = box3(50.0, 0.05, M_PI - 0.05, -12.6, 12.6);
  s.boundary_point = [](int, double, double) -> Vec {
    fail(ErrorKind::precondition, "product_sphere has no boundary");
  };
  s.boundary_components = 0;
  s.periodic_dims = {{2, 2.0 * M_PI}};
  return s;
}

CatalogScenario make_product_conformal(const std::map<std::string, double>& p) {
  CatalogScenario s;
  s.name = "product_conformal";
  double amp = param(p, "amp", 0.3);
  double width = param(p, "width", 1.0);
  double R = param(p, "R", 1.0);
  s.params = {{"amp", amp}, {"width", width}, {"R", R}};

  auto conf = [amp, width](double x, double y) {
    return 1.0 + amp * std::exp(-(x * x + y * y) / (width * width));
  };
  s.metric.dimension = 3;
  s.metric.signature = SignatureKind::lorentzian;
  s.metric.catalog_id = s.name;
  s.metric.metric_eval = [conf](const Vec& x) {
    double c = conf(x(1), x(2));
    Mat g = Mat::Zero(3, 3);
    g(0, 0) = -1.0;
    g(1, 1) = c * c;
    g(2, 2) = c * c;
    return g;
  };
  s.metric.metric_derivative = [amp, width, conf](const Vec& x) {
    double c = conf(x(1), x(2));
    double e = c - 1.0;
    double cx = e * (-2.0 * x(1) / (width * width));
    double cy = e * (-2.0 * x(2) / (width * width));
    Tensor3 dg(3, Mat::Zero(3, 3));
    dg[1](1, 1) = dg[1](2, 2) = 2.0 * c * cx;
    dg[2](1, 1) = dg[2](2, 2) = 2.0 * c * cy;
    return dg;
  };

  s.domain.defining_fn = [R](const Vec& x) {
    return (R * R - x(1) * x(1) - x(2) * x(2)) / (2.0 * R);
  };
  s.domain.defining_gradient = [R](const Vec& x) {
    Vec g(3);
    g << 0.0, -x(1) / R, -x(2) / R;
    return g;
  };
  s.domain.chart_bounds = box3(50.0, -(R + 0.6), R + 0.6, -(R + 0.6), R + 0.6);

  s.boundary_point = [R](int, double t, double th) {
    Vec x(3);
    x << t, R * std::cos(th), R * std::sin(th);
    return x;
  };
  s.injectivity_scale = R;
  return s;
}

CatalogScenario make_jet_perturbed(const std::map<std::string, double>& p) {
  CatalogScenario s = make_cylinder_normal(p);
  s.name = "jet_perturbed";
  double R = param(p, "R", 1.0);
  int m = static_cast<int>(param(p, "m", 2.0));
  double sp = param(p, "s", 0.0);
  double qtt = param(p, "q_tt", 0.0);
  double qtth = param(p, "q_ttheta", 0.0);
  double qthth = param(p, "q_thetatheta", 1.0);
  if (m < 1) fail(ErrorKind::config, "jet_perturbed: m must be >= 1");
  s.params = {{"R", R},         {"m", double(m)},   {"s", sp},
              {"q_tt", qtt},    {"q_ttheta", qtth}, {"q_thetatheta", qthth}};

  // g_s = g_0 + s * chi(u) u^m / m! * q_ab dx^a dx^b on boundary indices (t, theta),
  // supported in the collar u < 0.6.
  Cutoff chi{0.3, 0.6};
  double mfact = 1.0;
  for (int i = 2; i <= m; ++i) mfact *= i;

  s.metric.catalog_id = s.name;
  s.metric.metric_eval = [R, m, sp, qtt, qtth, qthth, chi, mfact](const Vec& x) {
    double u = x(1);
    Mat g = Mat::Zero(3, 3);
    g(0, 0) = -1.0;
    g(1, 1) = 1.0;
    double r = R - u;
    g(2, 2) = r * r;
    double w = sp * chi.value(u) * std::pow(u, m) / mfact;
    g(0, 0) += w * qtt;
    g(0, 2) += w * qtth;
    g(2, 0) += w * qtth;
    g(2, 2) += w * qthth;
    return g;
  };
  s.metric.metric_derivative = [R, m, sp, qtt, qtth, qthth, chi, mfact](const Vec& x) {
    double u = x(1);
    Tensor3 dg(3, Mat::Zero(3, 3));
    dg[1](2, 2) = -2.0 * (R - u);
    double wp = sp *
                (chi.deriv(u) * std::pow(u, m) + chi.value(u) * m * std::pow(u, m - 1)) / mfact;
    dg[1](0, 0) += wp * qtt;
    dg[1](0, 2) += wp * qtth;
    dg[1](2, 0) += wp * qtth;
    dg[1](2, 2) += wp * qthth;
    return dg;
  };
  return s;
}

}  // namespace

CatalogScenario make_catalog(const std::string& name,
                             const std::map<std::string, double>& params) {
  if (name == "minkowski_slab") return make_slab(params);
  if (name == "minkowski_cylinder") return make_cylinder(params);
  if (name == "minkowski_annulus") return make_annulus(params);
  if (name == "minkowski_polar") return make_polar(params);
  if (name == "cylinder_normal") return make_cylinder_normal(params);
  if (name == "product_sphere") return make_product_sphere(params);
  if (name == "product_conformal") return make_product_conformal(params);
  if (name == "jet_perturbed") return make_jet_perturbed(params);
  fail(ErrorKind::config, "unknown catalog metric: " + name);
}

}  // namespace lenslab
