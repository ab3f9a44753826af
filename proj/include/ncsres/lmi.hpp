#pragma once

// Small dense LMI feasibility engine.
//
// A problem is a list of symmetric constraint matrices that are affine in a
// vector y of decision variables,
//
//     F(y) = F0 + sum_k y_k F_k,
//
// each tagged "< 0", "<= 0" or "> 0". Decision variables are grouped into
// symmetric matrix blocks (VariableLayout) so that points can be unpacked into
// matrices and the solver can box them.
//
// Answers are one-sided: "feasible" is only returned for a point that passed
// verify_point; everything else is "infeasible-or-unknown".

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "ncsres/errors.hpp"
#include "ncsres/tolerances.hpp"

namespace ncsres::lmi {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class Sense { StrictNegative, NonPositive, PositiveDefinite };

inline const char* to_string(Sense s) {
  switch (s) {
    case Sense::StrictNegative: return "<0";
    case Sense::NonPositive: return "<=0";
    case Sense::PositiveDefinite: return ">0";
  }
  return "?";
}

/// Symmetric matrix variable of size dim x dim, stored as its upper triangle
/// (row-major) starting at `offset` in the stacked variable vector.
struct VariableBlock {
  std::string name;
  int dim = 0;
  int offset = 0;

  int size() const { return dim * (dim + 1) / 2; }
};

class VariableLayout {
 public:
  int add_block(std::string name, int dim) {
    if (dim < 1) throw DimensionError("variable block '" + name + "' must have positive size");
    blocks_.push_back({std::move(name), dim, size_});
    size_ += blocks_.back().size();
    return static_cast<int>(blocks_.size()) - 1;
  }

  int size() const { return size_; }
  const std::vector<VariableBlock>& blocks() const { return blocks_; }

  MatrixXd unpack(const VectorXd& y, int block) const {
    const auto& b = blocks_.at(static_cast<std::size_t>(block));
    MatrixXd X(b.dim, b.dim);
    int k = b.offset;
    for (int i = 0; i < b.dim; ++i)
      for (int j = i; j < b.dim; ++j) X(i, j) = X(j, i) = y(k++);
    return X;
  }

  void pack(const MatrixXd& X, int block, VectorXd& y) const {
    const auto& b = blocks_.at(static_cast<std::size_t>(block));
    if (X.rows() != b.dim || X.cols() != b.dim)
      throw DimensionError("cannot pack a " + std::to_string(X.rows()) + "x" +
                           std::to_string(X.cols()) + " matrix into block '" + b.name + "'");
    int k = b.offset;
    for (int i = 0; i < b.dim; ++i)
      for (int j = i; j < b.dim; ++j) y(k++) = 0.5 * (X(i, j) + X(j, i));
  }

  /// Basis matrix of variable k: E_ii or E_ij + E_ji.
  MatrixXd basis(int k) const {
    for (const auto& b : blocks_) {
      if (k < b.offset || k >= b.offset + b.size()) continue;
      int r = k - b.offset;
      for (int i = 0; i < b.dim; ++i) {
        const int row_len = b.dim - i;
        if (r < row_len) {
          const int j = i + r;
          MatrixXd E = MatrixXd::Zero(b.dim, b.dim);
          E(i, j) = 1.0;
          E(j, i) = 1.0;
          return E;
        }
        r -= row_len;
      }
    }
    throw DimensionError("variable index " + std::to_string(k) + " out of range");
  }

  int block_of(int k) const {
    for (std::size_t i = 0; i < blocks_.size(); ++i)
      if (k >= blocks_[i].offset && k < blocks_[i].offset + blocks_[i].size())
        return static_cast<int>(i);
    throw DimensionError("variable index " + std::to_string(k) + " out of range");
  }

 private:
  std::vector<VariableBlock> blocks_;
  int size_ = 0;
};

struct LinearTerm {
  int var = 0;
  MatrixXd coeff;
};

struct AffineConstraint {
  std::string name;
  Sense sense = Sense::StrictNegative;
  MatrixXd constant;
  std::vector<LinearTerm> terms;

  int dim() const { return static_cast<int>(constant.rows()); }

  MatrixXd evaluate(const VectorXd& y) const {
    MatrixXd F = constant;
    for (const auto& t : terms) F += y(t.var) * t.coeff;
    return F;
  }

  /// ||F0||_F + sum_k |y_k| ||F_k||_F, the size of the operands that were summed.
  double operand_scale(const VectorXd& y) const {
    double s = constant.norm();
    for (const auto& t : terms) s += std::abs(y(t.var)) * t.coeff.norm();
    return s;
  }
};

struct LmiProblem {
  VariableLayout layout;
  std::vector<AffineConstraint> constraints;

  int num_variables() const { return layout.size(); }

  void validate() const {
    for (const auto& c : constraints) {
      if (c.constant.rows() != c.constant.cols())
        throw DimensionError("constraint '" + c.name + "' is not square");
      if ((c.constant - c.constant.transpose()).norm() > 1e-12 * std::max(1.0, c.constant.norm()))
        throw ValidationError("constraint '" + c.name + "' has a nonsymmetric constant term");
      for (const auto& t : c.terms) {
        if (t.var < 0 || t.var >= num_variables())
          throw DimensionError("constraint '" + c.name + "' references an unknown variable");
        if (t.coeff.rows() != c.dim() || t.coeff.cols() != c.dim())
          throw DimensionError("constraint '" + c.name + "' mixes coefficient sizes");
        if ((t.coeff - t.coeff.transpose()).norm() > 1e-12 * std::max(1.0, t.coeff.norm()))
          throw ValidationError("constraint '" + c.name + "' has a nonsymmetric coefficient");
      }
    }
  }
};

// ---------------------------------------------------------------------------
// Independent verification (dense symmetric eigensolver only)

struct ConstraintCheck {
  std::string name;
  Sense sense = Sense::StrictNegative;
  double extreme_eigenvalue = 0.0;
  double scale = 0.0;
  double margin = 0.0;  ///< >= 0 means satisfied with the declared tolerance
  bool passed = false;
};

struct PointCheck {
  std::vector<ConstraintCheck> constraints;
  bool passed = false;
  double worst_margin = std::numeric_limits<double>::infinity();
};

inline PointCheck verify_point(const LmiProblem& p, const VectorXd& y) {
  if (y.size() != p.num_variables())
    throw DimensionError("point has " + std::to_string(y.size()) + " entries, problem has " +
                         std::to_string(p.num_variables()) + " variables");
  PointCheck out;
  out.passed = y.allFinite();
  for (const auto& c : p.constraints) {
    const MatrixXd F = c.evaluate(y);
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (F + F.transpose()), Eigen::EigenvaluesOnly);
    ConstraintCheck r;
    r.name = c.name;
    r.sense = c.sense;
    switch (c.sense) {
      case Sense::StrictNegative:
        r.extreme_eigenvalue = es.eigenvalues().maxCoeff();
        r.scale = F.norm();
        r.margin = -r.extreme_eigenvalue - kFeasibilityMargin * r.scale;
        r.passed = r.margin >= 0.0 && r.scale > 0.0;
        break;
      case Sense::NonPositive:
        r.extreme_eigenvalue = es.eigenvalues().maxCoeff();
        r.scale = c.operand_scale(y);
        r.margin = kPsdSlack * r.scale - r.extreme_eigenvalue;
        r.passed = r.margin >= 0.0;
        break;
      case Sense::PositiveDefinite:
        r.extreme_eigenvalue = es.eigenvalues().minCoeff();
        r.scale = F.norm();
        r.margin = r.extreme_eigenvalue - kFeasibilityMargin * r.scale;
        r.passed = r.margin > 0.0;
        break;
    }
    if (!std::isfinite(r.extreme_eigenvalue)) r.passed = false;
    out.passed = out.passed && r.passed;
    out.worst_margin = std::min(out.worst_margin, r.scale > 0 ? r.margin / r.scale : r.margin);
    out.constraints.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Solvers

enum class Backend { Barrier, AlternatingProjections };

inline const char* to_string(Backend b) {
  return b == Backend::Barrier ? "barrier" : "alternating-projections";
}

inline Backend parse_backend(const std::string& s) {
  if (s == "barrier") return Backend::Barrier;
  if (s == "alternating-projections" || s == "ap") return Backend::AlternatingProjections;
  throw ValidationError("unknown solver backend '" + s + "'");
}

struct SolverOptions {
  int max_iterations = 400;  ///< Newton steps (barrier) or projection sweeps (AP)
  double tolerance = 1e-8;   ///< normalized margin below which the problem is declared out of reach
  std::uint64_t seed = 0;    ///< only the AP backend draws random numbers
  Backend backend = Backend::Barrier;
};

enum class Status { Feasible, InfeasibleOrUnknown };

struct Solution {
  Status status = Status::InfeasibleOrUnknown;
  VectorXd point;
  double margin = -std::numeric_limits<double>::infinity();  ///< best normalized margin reached
  int iterations = 0;
  double solve_time = 0.0;
  std::string diagnostics;

  bool feasible() const { return status == Status::Feasible; }
};

namespace detail {

// Constraint in the internal form G(z) = c G0 + sum_k y_k G_k - w t I >= 0.
struct BarrierBlock {
  std::vector<std::pair<int, MatrixXd>> terms;  // indices into z = (y, c, t)
  int dim = 0;
  double t_weight = 0.0;
};

inline double normalization(const AffineConstraint& c) {
  double s = c.constant.norm();
  for (const auto& t : c.terms) s = std::max(s, t.coeff.norm());
  return s > 0.0 ? s : 1.0;
}

class BarrierSolver {
 public:
  BarrierSolver(const LmiProblem& p, const SolverOptions& opt) : problem_(p), opt_(opt) {
    m_ = p.num_variables();
    c_idx_ = m_;
    t_idx_ = m_ + 1;
    for (const auto& c : p.constraints) {
      const double sign = c.sense == Sense::PositiveDefinite ? 1.0 : -1.0;
      const double s = sign / normalization(c);
      BarrierBlock b;
      b.dim = c.dim();
      b.t_weight = 1.0;
      if (c.constant.norm() > 0.0) b.terms.emplace_back(c_idx_, s * c.constant);
      for (const auto& t : c.terms) b.terms.emplace_back(t.var, s * t.coeff);
      blocks_.push_back(std::move(b));
    }
    // Box every variable block: -I <= X <= I.
    for (const auto& vb : p.layout.blocks()) {
      for (double sign : {1.0, -1.0}) {
        BarrierBlock b;
        b.dim = vb.dim;
        for (int k = vb.offset; k < vb.offset + vb.size(); ++k)
          b.terms.emplace_back(k, -sign * p.layout.basis(k));
        constant_identity_.push_back(blocks_.size());
        blocks_.push_back(std::move(b));
      }
    }
    // c >= t and c <= 1.
    {
      BarrierBlock b;
      b.dim = 1;
      b.t_weight = 1.0;
      b.terms.emplace_back(c_idx_, MatrixXd::Ones(1, 1));
      blocks_.push_back(std::move(b));
    }
    {
      BarrierBlock b;
      b.dim = 1;
      b.terms.emplace_back(c_idx_, -MatrixXd::Ones(1, 1));
      constant_identity_.push_back(blocks_.size());
      blocks_.push_back(std::move(b));
    }
    has_identity_.assign(blocks_.size(), false);
    for (auto i : constant_identity_) has_identity_[i] = true;
    nu_ = 0;
    for (const auto& b : blocks_) nu_ += b.dim;
  }

  Solution run() {
    const auto start = std::chrono::steady_clock::now();
    Solution sol;
    const int n = m_ + 2;
    VectorXd z = VectorXd::Zero(n);
    z(c_idx_) = 0.5;
    {
      double tmin = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < blocks_.size(); ++j) {
        if (blocks_[j].t_weight == 0.0) continue;
        z(t_idx_) = 0.0;
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(eval(j, z), Eigen::EigenvaluesOnly);
        tmin = std::min(tmin, es.eigenvalues().minCoeff() / blocks_[j].t_weight);
      }
      z(t_idx_) = tmin - 1.0;
    }

    double s = 1.0;
    const double mu = 20.0;
    int iters = 0;
    double best_margin = -std::numeric_limits<double>::infinity();
    bool stalled = false;
    std::string diag;

    while (iters < opt_.max_iterations) {
      // Centering.
      for (int inner = 0; inner < 60 && iters < opt_.max_iterations; ++inner) {
        VectorXd g;
        MatrixXd H;
        double f0;
        if (!newton_system(z, s, g, H, f0)) {
          diag = "numerical breakdown: lost positive definiteness";
          stalled = true;
          break;
        }
        Eigen::LDLT<MatrixXd> ldlt(H);
        VectorXd dz = ldlt.solve(-g);
        if (!dz.allFinite()) {
          diag = "numerical breakdown: singular Newton system";
          stalled = true;
          break;
        }
        const double dec = -g.dot(dz);
        ++iters;
        if (dec < 0.0) {
          diag = "numerical breakdown: Newton direction is not a descent direction";
          stalled = true;
          break;
        }
        double alpha = 1.0;
        bool moved = false;
        while (alpha > 1e-14) {
          const VectorXd trial = z + alpha * dz;
          double f1;
          if (objective(trial, s, f1) && f1 <= f0 - 0.01 * alpha * dec) {
            z = trial;
            moved = true;
            break;
          }
          alpha *= 0.5;
        }
        best_margin = std::max(best_margin, z(t_idx_));
        if (z(t_idx_) > 0.0 && z(c_idx_) > 0.0) {
          const VectorXd y = z.head(m_) / z(c_idx_);
          if (verify_point(problem_, y).passed) {
            sol.status = Status::Feasible;
            sol.point = y;
            sol.margin = z(t_idx_);
            sol.iterations = iters;
            sol.solve_time = seconds_since(start);
            sol.diagnostics = "verified";
            return sol;
          }
        }
        if (!moved) {
          stalled = true;
          diag = "line search stalled";
          break;
        }
        if (dec < 1e-9) break;
      }
      if (stalled) break;
      const double gap = nu_ / s;
      if (z(t_idx_) + gap < opt_.tolerance) {
        diag = "margin upper bound " + std::to_string(z(t_idx_) + gap) + " below tolerance";
        break;
      }
      if (gap < 1e-3 * opt_.tolerance) {
        diag = "converged without a verifiable point";
        break;
      }
      s *= mu;
    }
    if (diag.empty()) diag = "iteration limit reached";
    sol.status = Status::InfeasibleOrUnknown;
    sol.point = z(c_idx_) > 0.0 ? VectorXd(z.head(m_) / z(c_idx_)) : VectorXd(z.head(m_));
    sol.margin = best_margin;
    sol.iterations = iters;
    sol.solve_time = seconds_since(start);
    sol.diagnostics = diag;
    return sol;
  }

 private:
  static double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }

  MatrixXd eval(std::size_t j, const VectorXd& z) const {
    const auto& b = blocks_[j];
    MatrixXd G = MatrixXd::Zero(b.dim, b.dim);
    if (has_identity_[j]) G.diagonal().setOnes();
    for (const auto& [k, C] : b.terms) G += z(k) * C;
    if (b.t_weight != 0.0) G.diagonal().array() -= b.t_weight * z(t_idx_);
    return G;
  }

  bool objective(const VectorXd& z, double s, double& f) const {
    f = -s * z(t_idx_);
    for (std::size_t j = 0; j < blocks_.size(); ++j) {
      Eigen::LLT<MatrixXd> llt(eval(j, z));
      if (llt.info() != Eigen::Success) return false;
      const auto& L = llt.matrixLLT();
      for (int i = 0; i < L.rows(); ++i) {
        if (!(L(i, i) > 0.0)) return false;
        f -= 2.0 * std::log(L(i, i));
      }
    }
    return std::isfinite(f);
  }

  bool newton_system(const VectorXd& z, double s, VectorXd& g, MatrixXd& H, double& f) const {
    const int n = m_ + 2;
    g = VectorXd::Zero(n);
    H = MatrixXd::Zero(n, n);
    g(t_idx_) = -s;
    f = -s * z(t_idx_);
    std::vector<int> idx;
    std::vector<MatrixXd> W;
    for (std::size_t j = 0; j < blocks_.size(); ++j) {
      const auto& b = blocks_[j];
      Eigen::LLT<MatrixXd> llt(eval(j, z));
      if (llt.info() != Eigen::Success) return false;
      const MatrixXd L = llt.matrixL();
      for (int i = 0; i < L.rows(); ++i) f -= 2.0 * std::log(L(i, i));
      const MatrixXd Linv =
          L.triangularView<Eigen::Lower>().solve(MatrixXd::Identity(b.dim, b.dim));
      idx.clear();
      W.clear();
      for (const auto& [k, C] : b.terms) {
        idx.push_back(k);
        W.push_back(Linv * C * Linv.transpose());
      }
      if (b.t_weight != 0.0) {
        idx.push_back(t_idx_);
        W.push_back(-b.t_weight * Linv * Linv.transpose());
      }
      for (std::size_t a = 0; a < idx.size(); ++a) {
        g(idx[a]) -= W[a].trace();
        for (std::size_t c = 0; c <= a; ++c) {
          const double h = W[a].cwiseProduct(W[c]).sum();
          H(idx[a], idx[c]) += h;
          if (a != c) H(idx[c], idx[a]) += h;
        }
      }
    }
    return g.allFinite() && H.allFinite();
  }

  const LmiProblem& problem_;
  SolverOptions opt_;
  std::vector<BarrierBlock> blocks_;
  std::vector<std::size_t> constant_identity_;
  std::vector<bool> has_identity_;
  int m_ = 0;
  int c_idx_ = 0;
  int t_idx_ = 0;
  double nu_ = 0.0;
};

/// Alternating projections between the product of shifted PSD cones and the
/// affine image of the decision variables.
inline Solution solve_alternating_projections(const LmiProblem& p, const SolverOptions& opt) {
  const auto start = std::chrono::steady_clock::now();
  const int m = p.num_variables();
  struct Normalized {
    MatrixXd G0;
    std::vector<std::pair<int, MatrixXd>> terms;
  };
  std::vector<Normalized> cons;
  for (const auto& c : p.constraints) {
    const double sgn = (c.sense == Sense::PositiveDefinite ? 1.0 : -1.0) / normalization(c);
    Normalized n;
    n.G0 = sgn * c.constant;
    for (const auto& t : c.terms) n.terms.emplace_back(t.var, sgn * t.coeff);
    cons.push_back(std::move(n));
  }
  MatrixXd N = MatrixXd::Zero(m, m);
  for (const auto& c : cons)
    for (const auto& [a, A] : c.terms)
      for (const auto& [b, B] : c.terms) N(a, b) += A.cwiseProduct(B).sum();
  N.diagonal().array() += 1e-12 * std::max(1.0, N.diagonal().maxCoeff());
  Eigen::LDLT<MatrixXd> normal(N);

  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> gauss(0.0, 1e-3);
  VectorXd y(m);
  for (int k = 0; k < m; ++k) y(k) = gauss(rng);

  const double target = 1e-3;
  Solution sol;
  int it = 0;
  for (; it < opt.max_iterations; ++it) {
    VectorXd rhs = VectorXd::Zero(m);
    double worst = std::numeric_limits<double>::infinity();
    for (const auto& c : cons) {
      MatrixXd G = c.G0;
      for (const auto& [k, A] : c.terms) G += y(k) * A;
      Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (G + G.transpose()));
      worst = std::min(worst, es.eigenvalues().minCoeff());
      VectorXd lam = es.eigenvalues().cwiseMax(target);
      const MatrixXd Z = es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
      const MatrixXd R = Z - c.G0;
      for (const auto& [k, A] : c.terms) rhs(k) += A.cwiseProduct(R).sum();
    }
    sol.margin = std::max(sol.margin, worst);
    if (worst > 0.0 && verify_point(p, y).passed) {
      sol.status = Status::Feasible;
      sol.point = y;
      sol.iterations = it;
      sol.solve_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      sol.diagnostics = "verified";
      return sol;
    }
    const VectorXd next = normal.solve(rhs);
    if (!next.allFinite()) {
      sol.diagnostics = "numerical breakdown in the affine projection";
      break;
    }
    if ((next - y).norm() <= 1e-14 * std::max(1.0, y.norm())) {
      y = next;
      sol.diagnostics = "projections stalled";
      break;
    }
    y = next;
  }
  if (sol.diagnostics.empty()) sol.diagnostics = "iteration limit reached";
  sol.status = Status::InfeasibleOrUnknown;
  sol.point = y;
  sol.iterations = it;
  sol.solve_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return sol;
}

}  // namespace detail

inline Solution solve(const LmiProblem& p, const SolverOptions& opt = {}) {
  p.validate();
  if (opt.backend == Backend::AlternatingProjections)
    return detail::solve_alternating_projections(p, opt);
  return detail::BarrierSolver(p, opt).run();
}

}  // namespace ncsres::lmi
