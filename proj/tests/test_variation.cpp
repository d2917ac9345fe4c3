#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "lenslab/variation.hpp"

using namespace lenslab;

namespace {

Vec vec3(double a, double b, double c) {
  Vec v(3);
  v << a, b, c;
  return v;
}

const double kRt3 = std::sqrt(3.0);

}  // namespace

TEST_CASE("variation residual: slab symmetry family") {
  auto slab = make_catalog("minkowski_slab");
  VariationFamily fam;
  fam.starts = [](double l) {
    return GeodesicState{vec3(0, l, 0), vec3(1, 0, 0.5)};
  };
  CHECK(variation_residual(slab.metric, slab.domain, fam, 0.0) < 1e-9);
}

TEST_CASE("variation residual: hand-computed slab velocity family") {
  // v(l) = (1, 0, 0.5 + l): h(0) = -0.75, h'(0) = 1, tau(0) = 2, tau'(0) = -4,
  // y'(0) = (-4, 0, 0), both sides equal 8.
  auto slab = make_catalog("minkowski_slab");
  VariationFamily fam;
  fam.starts = [](double l) {
    return GeodesicState{vec3(0, 0, 0), vec3(1, 0, 0.5 + l)};
  };
  CHECK(variation_residual(slab.metric, slab.domain, fam, 0.0) < 1e-8);
}

TEST_CASE("variation residual: lightlike boundary-sliding family on the cylinder") {
  auto cyl = make_catalog("minkowski_cylinder");
  // Fixed null direction, start sliding along the boundary circle.
  VariationFamily fam;
  fam.starts = [&cyl](double l) {
    Vec p = cyl.boundary_point(0, 0.0, l);
    Vec v = vec3(1.0, -std::cos(l), -std::sin(l));  // inward null chord through the center
    return GeodesicState{p, v};
  };
  CHECK(variation_residual(cyl.metric, cyl.domain, fam, 0.0) < 1e-6);
}

TEST_CASE("variation residual: random transversal families stay small") {
  // Families must be smooth in lambda, so they are written in closed
  // coordinate form rather than through pointwise frame constructions.
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (const char* name : {"minkowski_slab", "minkowski_cylinder", "product_conformal"}) {
    auto cat = make_catalog(name);
    bool slab = std::string(name) == "minkowski_slab";
    int done = 0;
    while (done < 10) {
      double t0 = 0.2 * u(rng), a0 = 0.5 * u(rng);
      double c1 = 0.3 * u(rng), c2 = 0.3 * u(rng), c3 = 0.2 * u(rng), c4 = 0.3 * u(rng);
      VariationFamily fam;
      if (slab) {
        fam.starts = [t0, a0, c1, c2, c3, c4](double l) {
          Vec p(3), v(3);
          p << t0 + c1 * l, a0 + c2 * l, 0.0;
          v << 1.0, 0.3 + 0.2 * c4 * l, 0.8 + c3 * l;
          return GeodesicState{p, v};
        };
      } else {
        fam.starts = [t0, a0, c1, c2, c3, c4](double l) {
          double th = 2.0 * a0 + c2 * l;
          Vec p(3), v(3);
          p << t0 + c1 * l, std::cos(th), std::sin(th);
          double rad = 0.7 + c3 * l;   // inward radial speed
          double tan = 0.3 + 0.2 * c4 * l;
          v << 1.0, -rad * std::cos(th) - tan * std::sin(th),
              -rad * std::sin(th) + tan * std::cos(th);
          return GeodesicState{p, v};
        };
      }
      try {
        double resid = variation_residual(cat.metric, cat.domain, fam, 0.0);
        CHECK(resid < 1e-5);
        ++done;
      } catch (const Error&) {
        continue;  // family left the chart or hit a tangential endpoint; redraw
      }
    }
  }
}

TEST_CASE("lightlike tau recovery: slab null chord") {
  auto slab = make_catalog("minkowski_slab");
  auto oracle = self_consistent_interior_oracle(slab.metric, slab.domain, 20.0);
  TauRecovery r = recover_lightlike_tau_interior(slab.metric, slab.domain, oracle,
                                                 {vec3(0, 0, 0), vec3(1, 0, 1), {}});
  CHECK(r.tau == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(r.h_prime == doctest::Approx(-2.0).epsilon(1e-6));
}

TEST_CASE("lightlike tau recovery: cylinder chords") {
  auto cyl = make_catalog("minkowski_cylinder");
  auto oracle = self_consistent_interior_oracle(cyl.metric, cyl.domain, 20.0);

  // Null diameter chord: true interior time 2.
  TauRecovery r = recover_lightlike_tau_interior(cyl.metric, cyl.domain, oracle,
                                                 {vec3(0, 1, 0), vec3(1, -1, 0), {}});
  CHECK(r.tau == doctest::Approx(2.0).epsilon(1e-5));

  // Tilted chord: compare against the direct trace.
  double b = 0.5;
  Vec dir = vec3(1.0, -std::sqrt(1.0 - b * b), b);
  ScatteringSample direct =
      interior_scattering(cyl.metric, cyl.domain, {vec3(0, 1, 0), dir, {}}, 20.0);
  TauRecovery rb =
      recover_lightlike_tau_interior(cyl.metric, cyl.domain, oracle, {vec3(0, 1, 0), dir, {}});
  CHECK(rb.tau == doctest::Approx(direct.tau).epsilon(1e-4));
}

TEST_CASE("recover interior from complete: slab passthrough and annulus tangent group") {
  auto slab = make_catalog("minkowski_slab");
  std::vector<TangentVec> starts;
  for (int j = 0; j < 5; ++j)
    starts.push_back({slab.boundary_point(0, 0.0, 0.3 * j), vec3(1, 0.05 * j, 0.9), {}});
  ScatteringTable direct_c =
      build_scattering_table(slab.metric, slab.domain, starts, ScatteringKind::complete, 10.0);
  ScatteringTable rec = recover_interior_from_complete(direct_c);
  ScatteringTable direct_i =
      build_scattering_table(slab.metric, slab.domain, starts, ScatteringKind::interior, 10.0);
  REQUIRE(rec.samples.size() == direct_i.samples.size());
  for (std::size_t i = 0; i < rec.samples.size(); ++i) {
    CHECK(std::abs(rec.samples[i].tau - direct_i.samples[i].tau) < 1e-9);
    CHECK((rec.samples[i].outbound.base - direct_i.samples[i].outbound.base).norm() < 1e-8);
  }

  // Annulus tangent chord: the two-member group splits at the graze.
  auto ann = make_catalog("minkowski_annulus");
  TangentVec entry{vec3(0, 1, 0), vec3(1.0, -kRt3 / 2.0, 0.5), {}};
  ScatteringTable closed;
  closed.kind = ScatteringKind::complete;
  for (auto& s : complete_flow_samples(ann.metric, ann.domain, entry, 4.0))
    closed.samples.push_back(s);
  ScatteringTable rec2 = recover_interior_from_complete(closed);
  REQUIRE(rec2.samples.size() == 2);
  CHECK(rec2.samples[0].tau == doctest::Approx(kRt3 / 2.0).epsilon(1e-5));
  CHECK(std::hypot(rec2.samples[0].outbound.base(1), rec2.samples[0].outbound.base(2)) ==
        doctest::Approx(0.5).epsilon(1e-5));
  CHECK(rec2.samples[1].tau == doctest::Approx(kRt3 / 2.0).epsilon(1e-5));

  // Incomplete table: entry alone cannot be converted.
  ScatteringTable broken;
  broken.kind = ScatteringKind::complete;
  broken.samples.push_back(closed.samples[0]);
  CHECK_THROWS_AS(recover_interior_from_complete(broken), Error);
}

TEST_CASE("recover complete from interior: annulus tangent chord") {
  auto ann = make_catalog("minkowski_annulus");
  ann.domain.collar_width = 0.12;
  auto oracle = self_consistent_interior_oracle(ann.metric, ann.domain, 20.0);
  TangentVec entry{vec3(0, 1, 0), vec3(1.0, -kRt3 / 2.0, 0.5), {}};
  CompleteRecoveryOptions opts;
  opts.t_max = 8.0;
  CompleteRecovery rec = recover_complete_from_interior(ann.metric, ann.domain, oracle, entry, opts);
  ScatteringSample direct = complete_scattering(ann.metric, ann.domain, entry, 8.0);
  CHECK(rec.sample.tau == doctest::Approx(direct.tau).epsilon(1e-4));
  CHECK((rec.sample.outbound.base - direct.outbound.base).norm() < 1e-3);
  CHECK(rec.iterations <= static_cast<int>(std::ceil(opts.t_max / opts.delta)));
  for (double adv : rec.step_advances) CHECK(adv >= opts.delta);
}

TEST_CASE("recover complete from interior: slab is a single step") {
  auto slab = make_catalog("minkowski_slab");
  slab.domain.collar_width = 0.15;
  auto oracle = self_consistent_interior_oracle(slab.metric, slab.domain, 20.0);
  TangentVec entry{vec3(0, 0, 0), vec3(1, 0, 1), {}};
  CompleteRecovery rec = recover_complete_from_interior(slab.metric, slab.domain, oracle, entry);
  ScatteringSample direct = complete_scattering(slab.metric, slab.domain, entry, 20.0);
  CHECK(rec.sample.tau == doctest::Approx(direct.tau).epsilon(1e-4));
  CHECK((rec.sample.outbound.base - direct.outbound.base).norm() < 1e-4);
}

TEST_CASE("near-tangent family: recovered tau continuous across the tangency") {
  auto ann = make_catalog("minkowski_annulus");
  ann.domain.collar_width = 0.12;
  auto oracle = self_consistent_interior_oracle(ann.metric, ann.domain, 20.0);
  CompleteRecoveryOptions opts;
  opts.t_max = 8.0;
  for (double ip : {0.5 - 1e-3, 0.5 + 1e-3}) {
    Vec dir = vec3(1.0, -std::sqrt(1.0 - ip * ip), ip);
    TangentVec entry{vec3(0, 1, 0), dir, {}};
    CompleteRecovery rec =
        recover_complete_from_interior(ann.metric, ann.domain, oracle, entry, opts);
    ScatteringSample direct = complete_scattering(ann.metric, ann.domain, entry, 8.0);
    CHECK(std::abs(rec.sample.tau - direct.tau) < 1e-4 * direct.tau);
  }
}

TEST_CASE("eikonal residual of the proper-time field on the cylinder") {
  auto cyl = make_catalog("minkowski_cylinder");
  Vec exit = vec3(2.5, 1.0, 0.0);
  auto tau_field = [&](const Vec& x) {
    // Proper time to the fixed exit point (flat chart closed form stands in
    // for the shooting maximizer here; the rigidity suite exercises the
    // shooting path).
    Vec d = exit - x;
    return std::sqrt(d(0) * d(0) - d(1) * d(1) - d(2) * d(2));
  };
  for (double r : {0.0, 0.3, 0.6}) {
    Vec x = vec3(0.1, -r, 0.2 * r);
    CHECK(eikonal_residual(cyl.metric, tau_field, x) < 1e-4);
  }
}

TEST_CASE("lambda stencils are Richardson-checked") {
  auto slab = make_catalog("minkowski_slab");
  VariationFamily fam;
  fam.starts = [](double l) {
    Vec x(3), v(3);
    x << 0, 0, 0;
    v << 1, 0, 0.5 + l;
    return GeodesicState{x, v};
  };
  VariationCheck ck = variation_check(slab.metric, slab.domain, fam, 0.0);
  // The 4th- and 2nd-order stencils agree to the coarse h^2 truncation:
  // (2h)^2 tau'''/6 = 6.4e-5 for tau(l) = 1/(0.5+l), confirming the
  // derivative estimates are truncation- rather than noise-limited.
  CHECK(ck.stencil_check < 1e-4);
  CHECK(ck.stencil_check > 1e-6);
}

TEST_CASE("default delta rule: half the collar traversal, floored") {
  auto ann = make_catalog("minkowski_annulus");
  ann.domain.collar_width = 0.12;
  double delta = default_delta(ann, 0, 16, 12.0);
  CHECK(delta > 0.012);  // the floor 1e-3 * t_max
  CHECK(delta < 0.5);    // traversal times are short
}
