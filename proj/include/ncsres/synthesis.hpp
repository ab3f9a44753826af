#pragma once

// Certificate synthesis for fixed (delta, gamma, Delta, Tmad, Ts): the
// conditions on (P1, P2_0, P2_1, P3_0, P3_1) are LMIs, built here by probing
// the certificate module's own condition maps.

#include <functional>
#include <optional>
#include <string>

#include "ncsres/certificate.hpp"
#include "ncsres/lmi.hpp"

namespace ncsres {

/// Variable blocks, in layout order.
enum VariableBlockId : int { kP1 = 0, kP2_0, kP2_1, kP3_0, kP3_1 };

inline lmi::VariableLayout certificate_layout(const ClosedLoopMatrices& cl) {
  lmi::VariableLayout layout;
  layout.add_block("P1", cl.n_x());
  layout.add_block("P2_0", cl.n_y());
  layout.add_block("P2_1", cl.n_y());
  layout.add_block("P3_0", cl.n_y());
  layout.add_block("P3_1", cl.n_y());
  return layout;
}

inline CertificateParams params_from_point(const lmi::VariableLayout& layout, const VectorXd& y,
                                           double delta, double gamma) {
  CertificateParams p;
  p.P1 = layout.unpack(y, kP1);
  p.P2_0 = layout.unpack(y, kP2_0);
  p.P2_1 = layout.unpack(y, kP2_1);
  p.P3_0 = layout.unpack(y, kP3_0);
  p.P3_1 = layout.unpack(y, kP3_1);
  p.delta = delta;
  p.gamma = gamma;
  return p;
}

inline VectorXd point_from_params(const lmi::VariableLayout& layout, const CertificateParams& p) {
  VectorXd y(layout.size());
  layout.pack(p.P1, kP1, y);
  layout.pack(p.P2_0, kP2_0, y);
  layout.pack(p.P2_1, kP2_1, y);
  layout.pack(p.P3_0, kP3_0, y);
  layout.pack(p.P3_1, kP3_1, y);
  return y;
}

namespace detail {

using ConditionMap = std::function<MatrixXd(const CertificateParams&)>;

/// Coefficients of an affine map of the decision variables by probing with
/// the zero point and each basis direction.
inline lmi::AffineConstraint probe_affine(std::string name, lmi::Sense sense,
                                          const lmi::VariableLayout& layout, double delta,
                                          double gamma, const ConditionMap& map) {
  lmi::AffineConstraint c;
  c.name = std::move(name);
  c.sense = sense;
  VectorXd y = VectorXd::Zero(layout.size());
  c.constant = map(params_from_point(layout, y, delta, gamma));
  for (int k = 0; k < layout.size(); ++k) {
    y.setZero();
    y(k) = 1.0;
    MatrixXd coeff = map(params_from_point(layout, y, delta, gamma)) - c.constant;
    if (coeff.cwiseAbs().maxCoeff() > 0.0) c.terms.push_back({k, std::move(coeff)});
  }
  return c;
}

}  // namespace detail

/// Five P > 0 constraints, the two jump conditions and the four M vertices.
inline lmi::LmiProblem build_problem(const ClosedLoopMatrices& cl, double delta, double gamma,
                                     const NetworkParams& net, StabilityMode mode) {
  net.validate();
  if (!(delta > 0.0)) throw ValidationError("delta must be positive");
  if (mode == StabilityMode::InputOutput && !(gamma > 0.0))
    throw ValidationError("gamma must be positive in input-output mode");
  lmi::LmiProblem prob;
  prob.layout = certificate_layout(cl);
  const auto& L = prob.layout;
  using lmi::Sense;

  const std::array<const char*, 5> names = {"P1", "P2_0", "P2_1", "P3_0", "P3_1"};
  for (int b = 0; b < 5; ++b) {
    prob.constraints.push_back(detail::probe_affine(
        names[static_cast<std::size_t>(b)], Sense::PositiveDefinite, L, delta, gamma,
        [b](const CertificateParams& p) -> MatrixXd {
          switch (b) {
            case kP1: return p.P1;
            case kP2_0: return p.P2_0;
            case kP2_1: return p.P2_1;
            case kP3_0: return p.P3_0;
            default: return p.P3_1;
          }
        }));
  }
  prob.constraints.push_back(detail::probe_affine(
      "sampling-jump", Sense::NonPositive, L, delta, gamma,
      [&net](const CertificateParams& p) { return sampling_jump_condition(p, net); }));
  prob.constraints.push_back(detail::probe_affine(
      "update-jump", Sense::NonPositive, L, delta, gamma,
      [](const CertificateParams& p) { return update_jump_condition(p); }));
  const auto vertices = vertex_points(net);
  for (std::size_t i = 0; i < vertices.size(); ++i) {
    const auto [tau, l] = vertices[i];
    prob.constraints.push_back(detail::probe_affine(
        kVertexNames[i], Sense::StrictNegative, L, delta, gamma,
        [&cl, tau = tau, l = l, mode](const CertificateParams& p) {
          return assemble_M(cl, p, tau, l, mode);
        }));
  }
  return prob;
}

struct FeasibilityResult {
  bool feasible = false;
  std::optional<Certificate> certificate;
  double margin = 0.0;  ///< solver margin (normalized units)
  int iterations = 0;
  double solve_time = 0.0;
  std::string diagnostics;
};

/// Builds, solves and independently re-checks. `feasible` implies the
/// certificate passes check_certificate.
inline FeasibilityResult synthesize_certificate(const ClosedLoopMatrices& cl, double delta,
                                                double gamma, const NetworkParams& net,
                                                StabilityMode mode,
                                                const lmi::SolverOptions& opt = {}) {
  const lmi::LmiProblem prob = build_problem(cl, delta, gamma, net, mode);
  const lmi::Solution sol = lmi::solve(prob, opt);
  FeasibilityResult r;
  r.margin = sol.margin;
  r.iterations = sol.iterations;
  r.solve_time = sol.solve_time;
  r.diagnostics = sol.diagnostics;
  if (!sol.feasible()) return r;
  Certificate cert{params_from_point(prob.layout, sol.point, delta, gamma), net, mode};
  if (!check_certificate(cert, cl).passed) {
    r.diagnostics = "solver point rejected by check_certificate";
    return r;
  }
  r.feasible = true;
  r.certificate = std::move(cert);
  return r;
}

}  // namespace ncsres
