#pragma once

// Lyapunov certificates of the form
//
//   V(x) = xt' P1 xt + exp(-delta tau) (eta' P2_l eta + sigma' P3_l sigma)
//
// with P2_l = (1-l) P2_0 + l P2_1 (same for P3), the matrix function M(tau, l)
// whose negativity certifies the flow condition, and an eigenvalue based
// checker that is independent of any solver.

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "ncsres/errors.hpp"
#include "ncsres/hybrid.hpp"
#include "ncsres/lti_model.hpp"
#include "ncsres/tolerances.hpp"

namespace ncsres {

enum class StabilityMode { ZeroInput, InputOutput };

inline std::string to_string(StabilityMode m) {
  return m == StabilityMode::ZeroInput ? "zero-input" : "input-output";
}

inline StabilityMode parse_mode(const std::string& s) {
  if (s == "zero-input" || s == "zero_input" || s == "zi") return StabilityMode::ZeroInput;
  if (s == "input-output" || s == "input_output" || s == "io") return StabilityMode::InputOutput;
  throw ValidationError("unknown stability mode '" + s + "'");
}

/// Decision variables of the Lyapunov family together with the fixed scalars.
struct CertificateParams {
  MatrixXd P1;
  MatrixXd P2_0, P2_1;
  MatrixXd P3_0, P3_1;
  double delta = 0.0;
  double gamma = 0.0;

  const MatrixXd& P2(int l) const { return l == 0 ? P2_0 : P2_1; }
  const MatrixXd& P3(int l) const { return l == 0 ? P3_0 : P3_1; }
};

struct Certificate {
  CertificateParams params;
  NetworkParams net;
  StabilityMode mode = StabilityMode::ZeroInput;
};

/// Size of M(tau, l): (xt, eta, sigma[, w]).
inline int m_dimension(const ClosedLoopMatrices& cl, StabilityMode mode) {
  return cl.n_x() + 2 * cl.n_y() + (mode == StabilityMode::InputOutput ? cl.n_w() : 0);
}

inline void check_param_dims(const ClosedLoopMatrices& cl, const CertificateParams& p) {
  auto square = [](const MatrixXd& m, int n, const char* name) {
    if (m.rows() != n || m.cols() != n)
      throw DimensionError(std::string(name) + " is " + detail::shape(m) + ", expected " +
                           std::to_string(n) + "x" + std::to_string(n));
  };
  square(p.P1, cl.n_x(), "P1");
  square(p.P2_0, cl.n_y(), "P2_0");
  square(p.P2_1, cl.n_y(), "P2_1");
  square(p.P3_0, cl.n_y(), "P3_0");
  square(p.P3_1, cl.n_y(), "P3_1");
}

inline MatrixXd assemble_M(const ClosedLoopMatrices& cl, const CertificateParams& p, double tau,
                           int l, StabilityMode mode) {
  check_param_dims(cl, p);
  if (tau < 0.0) throw ValidationError("tau must be nonnegative");
  if (l != 0 && l != 1) throw ValidationError("l must be 0 or 1");
  const int nx = cl.n_x();
  const int ny = cl.n_y();
  const int nw = cl.n_w();
  const bool io = mode == StabilityMode::InputOutput;
  const int n = m_dimension(cl, mode);
  const double e = std::exp(-p.delta * tau);
  const MatrixXd& P2 = p.P2(l);
  const MatrixXd& P3 = p.P3(l);
  const MatrixXd P1A = p.P1 * cl.Axx;
  const MatrixXd P2Aee = P2 * cl.Aee;

  MatrixXd M = MatrixXd::Zero(n, n);
  M.block(0, 0, nx, nx) = P1A + P1A.transpose();
  if (io) M.block(0, 0, nx, nx) += cl.Co.transpose() * cl.Co;
  M.block(0, nx, nx, ny) = p.P1 * cl.Axe + e * cl.Aex.transpose() * P2;
  M.block(0, nx + ny, nx, ny) = e * cl.Aex.transpose() * P3;
  M.block(nx, nx, ny, ny) = e * (P2Aee + P2Aee.transpose() - p.delta * P2);
  M.block(nx, nx + ny, ny, ny) = e * cl.Aee.transpose() * P3;
  M.block(nx + ny, nx + ny, ny, ny) = -p.delta * e * P3;
  if (io) {
    const int w0 = nx + 2 * ny;
    M.block(0, w0, nx, nw) = p.P1 * cl.Axw;
    M.block(nx, w0, ny, nw) = e * P2 * cl.Aew;
    M.block(nx + ny, w0, ny, nw) = e * P3 * cl.Aew;
    M.block(w0, w0, nw, nw) = -p.gamma * p.gamma * MatrixXd::Identity(nw, nw);
  }
  // Mirror the strictly upper blocks.
  M.triangularView<Eigen::StrictlyLower>() = M.transpose().triangularView<Eigen::StrictlyLower>();
  return M;
}

/// The four (tau, l) points whose M must be negative definite.
inline std::array<std::pair<double, int>, 4> vertex_points(const NetworkParams& net) {
  return {{{0.0, 1}, {net.Tmad, 1}, {net.Tmad, 0}, {net.max_silence(), 0}}};
}

inline constexpr std::array<const char*, 4> kVertexNames = {"M(0,1)", "M(Tmad,1)", "M(Tmad,0)",
                                                            "M((Delta+1)Ts,0)"};

/// P2_1 - exp(-delta (Delta+1) Ts) P2_0 (must be <= 0).
inline MatrixXd sampling_jump_condition(const CertificateParams& p, const NetworkParams& net) {
  return p.P2_1 - std::exp(-p.delta * net.max_silence()) * p.P2_0;
}

/// P2_0 + P3_0 - P3_1 (must be <= 0).
inline MatrixXd update_jump_condition(const CertificateParams& p) {
  return p.P2_0 + p.P3_0 - p.P3_1;
}

// ---------------------------------------------------------------------------
// Independent checking

struct ConditionResult {
  std::string name;
  double extreme_eigenvalue = 0.0;  ///< lambda_max for "<", lambda_min for "> 0"
  double scale = 0.0;               ///< Frobenius scale the margin is relative to
  double margin = 0.0;              ///< signed slack, >= 0 means satisfied
  bool passed = false;
};

struct CertificateReport {
  std::vector<ConditionResult> conditions;
  /// M(0,0): flow points with l = 0 and tau < Tmad are not covered by the
  /// vertex list. Informational; does not take part in `passed`.
  ConditionResult early_l0_vertex;
  bool passed = false;

  const ConditionResult* find(const std::string& name) const {
    for (const auto& c : conditions)
      if (c.name == name) return &c;
    return nullptr;
  }
  /// Worst (largest) lambda_max over the four M vertices.
  double worst_vertex_eigenvalue() const {
    double w = -std::numeric_limits<double>::infinity();
    for (const auto& c : conditions)
      if (c.name.rfind("M(", 0) == 0) w = std::max(w, c.extreme_eigenvalue);
    return w;
  }
};

namespace detail {

inline double max_eig(const MatrixXd& S) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (S + S.transpose()), Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

inline double min_eig(const MatrixXd& S) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (S + S.transpose()), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

inline ConditionResult strict_negative(std::string name, const MatrixXd& M) {
  ConditionResult r;
  r.name = std::move(name);
  r.extreme_eigenvalue = max_eig(M);
  r.scale = M.norm();
  r.margin = -r.extreme_eigenvalue - kFeasibilityMargin * r.scale;
  r.passed = r.margin >= 0.0 && r.scale > 0.0;
  return r;
}

inline ConditionResult nonpositive(std::string name, const MatrixXd& M, double operand_scale) {
  ConditionResult r;
  r.name = std::move(name);
  r.extreme_eigenvalue = max_eig(M);
  r.scale = operand_scale;
  r.margin = kPsdSlack * operand_scale - r.extreme_eigenvalue;
  r.passed = r.margin >= 0.0;
  return r;
}

inline ConditionResult positive_definite(std::string name, const MatrixXd& P) {
  ConditionResult r;
  r.name = std::move(name);
  r.extreme_eigenvalue = min_eig(P);
  r.scale = P.norm();
  const double asym = (P - P.transpose()).norm();
  r.margin = r.extreme_eigenvalue - kFeasibilityMargin * r.scale;
  r.passed = r.margin > 0.0 && asym <= 1e-10 * std::max(1.0, r.scale);
  return r;
}

}  // namespace detail

inline CertificateReport check_certificate(const Certificate& cert, const ClosedLoopMatrices& cl) {
  const auto& p = cert.params;
  check_param_dims(cl, p);
  CertificateReport rep;
  rep.conditions.push_back(detail::positive_definite("P1", p.P1));
  rep.conditions.push_back(detail::positive_definite("P2_0", p.P2_0));
  rep.conditions.push_back(detail::positive_definite("P2_1", p.P2_1));
  rep.conditions.push_back(detail::positive_definite("P3_0", p.P3_0));
  rep.conditions.push_back(detail::positive_definite("P3_1", p.P3_1));

  const double e = std::exp(-p.delta * cert.net.max_silence());
  rep.conditions.push_back(detail::nonpositive("sampling-jump", sampling_jump_condition(p, cert.net),
                                               p.P2_1.norm() + e * p.P2_0.norm()));
  rep.conditions.push_back(detail::nonpositive("update-jump", update_jump_condition(p),
                                               p.P2_0.norm() + p.P3_0.norm() + p.P3_1.norm()));
  const auto vertices = vertex_points(cert.net);
  for (std::size_t i = 0; i < vertices.size(); ++i)
    rep.conditions.push_back(detail::strict_negative(
        kVertexNames[i], assemble_M(cl, p, vertices[i].first, vertices[i].second, cert.mode)));

  rep.early_l0_vertex = detail::strict_negative("M(0,0)", assemble_M(cl, p, 0.0, 0, cert.mode));
  rep.passed = p.delta > 0.0 && (cert.mode == StabilityMode::ZeroInput || p.gamma > 0.0) &&
               std::all_of(rep.conditions.begin(), rep.conditions.end(),
                           [](const ConditionResult& c) { return c.passed; });
  return rep;
}

struct GridCheckResult {
  double worst_eigenvalue = -std::numeric_limits<double>::infinity();  ///< over the covered segments
  double worst_tau = 0.0;
  int worst_l = 0;
  /// Same quantity over [0, Tmad] x {0}, which the vertex conditions do not cover.
  double worst_early_l0_eigenvalue = -std::numeric_limits<double>::infinity();
  double worst_early_l0_tau = 0.0;
};

/// Uniform tau-grid evaluation of lambda_max(M) on [0,Tmad] x {1} and
/// [Tmad,(Delta+1)Ts] x {0}, plus the uncovered segment [0,Tmad] x {0}.
inline GridCheckResult grid_check_M(const Certificate& cert, const ClosedLoopMatrices& cl,
                                    int grid_points) {
  if (grid_points < 2) throw ValidationError("grid_check_M needs at least two grid points");
  GridCheckResult r;
  const auto& net = cert.net;
  auto sweep = [&](double a, double b, int l, double& worst, double* worst_tau, int* worst_l) {
    for (int i = 0; i < grid_points; ++i) {
      const double tau = a + (b - a) * static_cast<double>(i) / (grid_points - 1);
      const double v = detail::max_eig(assemble_M(cl, cert.params, tau, l, cert.mode));
      if (v > worst) {
        worst = v;
        if (worst_tau) *worst_tau = tau;
        if (worst_l) *worst_l = l;
      }
    }
  };
  sweep(0.0, net.Tmad, 1, r.worst_eigenvalue, &r.worst_tau, &r.worst_l);
  sweep(net.Tmad, net.max_silence(), 0, r.worst_eigenvalue, &r.worst_tau, &r.worst_l);
  sweep(0.0, net.Tmad, 0, r.worst_early_l0_eigenvalue, &r.worst_early_l0_tau, nullptr);
  return r;
}

// ---------------------------------------------------------------------------
// Lyapunov function along states

inline double evaluate_V(const Certificate& cert, const HybridState& s) {
  const auto& p = cert.params;
  const double e = std::exp(-p.delta * s.tau);
  return s.xtilde.dot(p.P1 * s.xtilde) +
         e * (s.eta.dot(p.P2(s.l) * s.eta) + s.sigma.dot(p.P3(s.l) * s.sigma));
}

/// <grad V, f(x, w)> in closed form.
inline double evaluate_V_flow_derivative(const Certificate& cert, const ClosedLoopMatrices& cl,
                                         const HybridState& s, const VectorXd& w) {
  const auto& p = cert.params;
  const FlowDerivative f = flow_derivative(cl, s, w);
  const double e = std::exp(-p.delta * s.tau);
  const MatrixXd& P2 = p.P2(s.l);
  const MatrixXd& P3 = p.P3(s.l);
  const double quad = s.eta.dot(P2 * s.eta) + s.sigma.dot(P3 * s.sigma);
  return 2.0 * s.xtilde.dot(p.P1 * f.xtilde) +
         e * (2.0 * s.eta.dot(P2 * f.eta) + 2.0 * s.sigma.dot(P3 * f.sigma)) -
         p.delta * e * quad * f.tau;
}

// ---------------------------------------------------------------------------
// Constants of the exponential ISS / L2 bounds

struct CertificateBounds {
  double alpha1 = 0, alpha2 = 0;
  double beta1 = 0, beta2 = 0;
  double theta1 = 0, theta2 = 0;
  double rho1 = 0, rho2 = 0;
  double flow_margin = 0;  ///< -max lambda_max(M) over the flow set (varsigma bar, sign flipped)
  double lambda_t = 0;     ///< flow decay rate of V is 2 lambda_t
  double kappa = 0;        ///< overshoot 2 sqrt(rho2 / rho1)
  double gain_fn_coeff = 0;  ///< p(r) = gain_fn_coeff * r
  double l2_alpha = 0;       ///< coefficient of |x0|_A in the L2 inequality
};

namespace detail {

/// Bound constants without validity checks; lambda_t and the derived
/// constants are meaningful only when `flow_margin` > 0 and rho1 > 0.
inline CertificateBounds bounds_unchecked(const Certificate& cert, const ClosedLoopMatrices& cl) {
  const auto& p = cert.params;
  const auto& net = cert.net;
  CertificateBounds b;
  const double eS = std::exp(-p.delta * net.max_silence());
  const double eM = std::exp(-p.delta * net.Tmad);
  b.alpha1 = min_eig(p.P1);
  b.alpha2 = max_eig(p.P1);
  b.beta1 = std::min(min_eig(p.P2_0) * eS, min_eig(p.P2_1) * eM);
  b.beta2 = std::max(max_eig(p.P2_0), max_eig(p.P2_1));
  b.theta1 = std::min(min_eig(p.P3_0) * eS, min_eig(p.P3_1) * eM);
  b.theta2 = std::max(max_eig(p.P3_0), max_eig(p.P3_1));
  b.rho1 = std::min({b.alpha1, b.beta1, b.theta1});
  b.rho2 = std::max({b.alpha2, b.beta2, b.theta2});

  // M is affine in exp(-delta tau), so its worst lambda_max over the flow set
  // sits at tau in {0, Tmad} (l = 1) or tau in {0, (Delta+1) Ts} (l = 0).
  double worst = -std::numeric_limits<double>::infinity();
  for (const auto& [tau, l] : vertex_points(net)) worst = std::max(worst, max_eig(assemble_M(cl, p, tau, l, cert.mode)));
  worst = std::max(worst, max_eig(assemble_M(cl, p, 0.0, 0, cert.mode)));
  b.flow_margin = -worst;
  b.lambda_t = b.flow_margin / (2.0 * b.rho2);
  b.kappa = 2.0 * std::sqrt(b.rho2 / b.rho1);
  b.gain_fn_coeff = 2.0 * p.gamma / std::sqrt(2.0 * b.lambda_t * b.rho1);
  b.l2_alpha = std::sqrt(b.rho2);
  return b;
}

}  // namespace detail

/// Constants of the exponential ISS and L2 bounds for a valid certificate.
/// The flow decay rate needs M < 0 on the whole flow set, including the l = 0
/// points with tau < Tmad reached right after an update.
inline CertificateBounds compute_bounds(const Certificate& cert, const ClosedLoopMatrices& cl) {
  if (!check_certificate(cert, cl).passed)
    throw ValidationError("compute_bounds requires a certificate that passes check_certificate");
  CertificateBounds b = detail::bounds_unchecked(cert, cl);
  if (!(b.flow_margin > 0.0))
    throw ValidationError("M(tau, 0) is not negative definite on [0, Tmad); no flow decay rate exists");
  return b;
}

}  // namespace ncsres
