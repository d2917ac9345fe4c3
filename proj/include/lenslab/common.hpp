// lenslab - shared types, error taxonomy, numeric defaults
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace lenslab {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Third-order symbol container: T[k](i,j), e.g. Christoffel Gamma^k_ij or dg_k(i,j).
using Tensor3 = std::vector<Mat>;

enum class ErrorKind {
  domain,            // point outside chart bounds
  degeneracy,        // singular metric / degenerate boundary
  signature,         // signature mismatch or unsupported signature
  precondition,      // caller violated a stated precondition
  stiffness,         // integrator step-size underflow
  event_overflow,    // more boundary events than max_events
  shooting_failure,  // Newton shooting did not converge
  singular_jacobian, // degenerate endpoint map in shooting
  sampling_failure,  // rejection sampler exhausted its budget
  non_terminating,   // geodesic budget t_max exceeded
  zero_measure,      // tangential start that immediately leaves
  recovery,          // scattering-data recovery failed
  interpolation,     // table too sparse for the requested query
  ill_conditioned,   // fit condition number too large
  convexity,         // convexity certificate failed (K = 0 or II <= 0)
  convergence,       // limit sequence did not settle
  inconclusive,      // diagnostic uncertainty too large
  stall,             // iteration failed to advance by the certified bound
  resolution,        // grid too coarse to resolve a level set
  inconsistency,     // cross-checked data disagree
  config,            // bad scenario configuration
  incomplete_table,  // conversion input not closed under the flow
  indeterminate,     // classifier could not decide
};

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

// Numeric defaults shared across modules. Values are part of the artifact's
// contract; experiments may override the configurable ones through ScenarioConfig.
namespace defaults {
inline constexpr double class_tol = 1e-9;          // relative causal classification band
inline constexpr double ode_tol = 1e-10;           // integrator local error per step
inline constexpr double probe_ode_tol = 1e-12;     // tightened for jet probes
inline constexpr double event_tol = 1e-11;         // |phi| at located events
inline constexpr double tangent_threshold = 1e-6;  // normalized transversality
inline constexpr double conj_tol = 1e-7;           // smallest singular value at conjugacy
inline constexpr double shoot_tol = 1e-9;          // endpoint residual for shooting
inline constexpr double probe_dt = 1e-6;           // interior probe after tangential start
inline constexpr int max_events = 64;
inline constexpr int max_rejections = 1000;
inline constexpr int shoot_max_iter = 60;
inline constexpr double cone_width = 0.15;
inline constexpr double eps_max = 0.15;
inline constexpr int eps_points = 24;
inline constexpr double lambda_step = 1e-3;        // stencil spacing for family derivatives
inline constexpr double curvature_fd_step = 1e-5;  // dGamma for the Jacobi equation
inline constexpr double chain_rtol = 1e-5;
inline constexpr double chain_slack = 1e-4;
inline constexpr int chain_segments_init = 8;
inline constexpr int chain_segments_max = 64;
inline constexpr int exterior_anchor_count = 32;
}  // namespace defaults

inline double fd_step(double x) {
  // (machine eps)^(1/3) * max(1,|x|), the standard central-difference step.
  constexpr double cbrt_eps = 6.055454452393343e-06;
  return cbrt_eps * std::max(1.0, std::abs(x));
}

}  // namespace lenslab
