#pragma once

// Plant / controller data of the networked loop and the closed-loop flow blocks
// obtained after the change of coordinates eta = yhat - y, sigma = s_y - y.

#include <Eigen/Dense>
#include <cmath>
#include <sstream>
#include <string>

#include "ncsres/errors.hpp"

namespace ncsres {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace detail {

inline std::string shape(const MatrixXd& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

inline void require_finite(const MatrixXd& m, const std::string& name) {
  if (!m.allFinite()) throw ValidationError(name + " contains a non-finite entry");
}

inline void require_nonempty(const MatrixXd& m, const std::string& name) {
  if (m.rows() == 0 || m.cols() == 0) throw DimensionError(name + " is empty");
}

inline void require_rows(const MatrixXd& a, const std::string& an, const MatrixXd& b,
                         const std::string& bn) {
  if (a.rows() != b.rows())
    throw DimensionError("row mismatch between " + an + " (" + shape(a) + ") and " + bn + " (" +
                         shape(b) + ")");
}

inline void require_cols_match_rows(const MatrixXd& a, const std::string& an, const MatrixXd& b,
                                    const std::string& bn) {
  if (a.cols() != b.rows())
    throw DimensionError("inner dimension mismatch between " + an + " (" + shape(a) + ") and " +
                         bn + " (" + shape(b) + ")");
}

}  // namespace detail

/// xp' = Ap xp + Bp u + W w,  y = Cp xp.
struct PlantModel {
  MatrixXd A, B, C, W;

  int n_x() const { return static_cast<int>(A.rows()); }
  int n_u() const { return static_cast<int>(B.cols()); }
  int n_y() const { return static_cast<int>(C.rows()); }
  int n_w() const { return static_cast<int>(W.cols()); }

  void validate() const {
    detail::require_nonempty(A, "plant.A");
    detail::require_nonempty(B, "plant.B");
    detail::require_nonempty(C, "plant.C");
    detail::require_nonempty(W, "plant.W");
    if (A.rows() != A.cols()) throw DimensionError("plant.A is not square (" + detail::shape(A) + ")");
    detail::require_rows(A, "plant.A", B, "plant.B");
    detail::require_rows(A, "plant.A", W, "plant.W");
    if (C.cols() != A.rows())
      throw DimensionError("column mismatch between plant.C (" + detail::shape(C) + ") and plant.A (" +
                           detail::shape(A) + ")");
    detail::require_finite(A, "plant.A");
    detail::require_finite(B, "plant.B");
    detail::require_finite(C, "plant.C");
    detail::require_finite(W, "plant.W");
  }
};

/// xc' = Ac xc + Bc yhat,  u = Cc xc + Dc yhat.
struct ControllerModel {
  MatrixXd A, B, C, D;

  int n_x() const { return static_cast<int>(A.rows()); }

  void validate(const PlantModel& plant) const {
    detail::require_nonempty(A, "controller.A");
    detail::require_nonempty(B, "controller.B");
    detail::require_nonempty(C, "controller.C");
    detail::require_nonempty(D, "controller.D");
    if (A.rows() != A.cols())
      throw DimensionError("controller.A is not square (" + detail::shape(A) + ")");
    detail::require_rows(A, "controller.A", B, "controller.B");
    if (C.cols() != A.rows())
      throw DimensionError("column mismatch between controller.C (" + detail::shape(C) +
                           ") and controller.A (" + detail::shape(A) + ")");
    if (B.cols() != plant.n_y())
      throw DimensionError("controller.B (" + detail::shape(B) + ") does not accept plant.C outputs (" +
                           detail::shape(plant.C) + ")");
    if (C.rows() != plant.n_u() || D.rows() != plant.n_u())
      throw DimensionError("controller.C/controller.D rows do not match plant.B (" +
                           detail::shape(plant.B) + ")");
    if (D.cols() != plant.n_y())
      throw DimensionError("controller.D (" + detail::shape(D) + ") does not accept plant.C outputs (" +
                           detail::shape(plant.C) + ")");
    detail::require_finite(A, "controller.A");
    detail::require_finite(B, "controller.B");
    detail::require_finite(C, "controller.C");
    detail::require_finite(D, "controller.D");
  }
};

/// y_o = Co (xp, xc).
struct PerformanceOutput {
  MatrixXd Co;

  void validate(int n_xtilde) const {
    detail::require_nonempty(Co, "performance.Co");
    if (Co.cols() != n_xtilde)
      throw DimensionError("performance.Co has " + std::to_string(Co.cols()) + " columns, expected " +
                           std::to_string(n_xtilde));
    detail::require_finite(Co, "performance.Co");
  }
};

/// Flow-map blocks of the closed loop in (xtilde, eta, sigma) coordinates.
struct ClosedLoopMatrices {
  MatrixXd Axx, Axe, Axw;
  MatrixXd Aex, Aee, Aew;
  MatrixXd Co;

  int n_x() const { return static_cast<int>(Axx.rows()); }
  int n_y() const { return static_cast<int>(Aee.rows()); }
  int n_w() const { return static_cast<int>(Axw.cols()); }
  int n_yo() const { return static_cast<int>(Co.rows()); }
};

inline ClosedLoopMatrices assemble_closed_loop(const PlantModel& plant, const ControllerModel& ctrl,
                                               const PerformanceOutput& perf) {
  plant.validate();
  ctrl.validate(plant);
  const int np = plant.n_x();
  const int nc = ctrl.n_x();
  const int ny = plant.n_y();
  const int nw = plant.n_w();
  perf.validate(np + nc);

  ClosedLoopMatrices cl;
  cl.Axx.resize(np + nc, np + nc);
  cl.Axx.topLeftCorner(np, np) = plant.A + plant.B * ctrl.D * plant.C;
  cl.Axx.topRightCorner(np, nc) = plant.B * ctrl.C;
  cl.Axx.bottomLeftCorner(nc, np) = ctrl.B * plant.C;
  cl.Axx.bottomRightCorner(nc, nc) = ctrl.A;

  cl.Axe.resize(np + nc, ny);
  cl.Axe.topRows(np) = plant.B * ctrl.D;
  cl.Axe.bottomRows(nc) = ctrl.B;

  cl.Axw = MatrixXd::Zero(np + nc, nw);
  cl.Axw.topRows(np) = plant.W;

  MatrixXd selector = MatrixXd::Zero(ny, np + nc);
  selector.leftCols(np) = -plant.C;
  cl.Aex = selector * cl.Axx;
  cl.Aee = -plant.C * plant.B * ctrl.D;
  cl.Aew = -plant.C * plant.W;
  cl.Co = perf.Co;
  return cl;
}

/// Dense eigenvalue check: every eigenvalue of Axx has negative real part.
inline bool is_hurwitz(const MatrixXd& A) {
  Eigen::EigenSolver<MatrixXd> es(A, false);
  return (es.eigenvalues().real().array() < 0.0).all();
}

}  // namespace ncsres
