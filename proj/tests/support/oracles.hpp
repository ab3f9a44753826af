#pragma once

// Independent re-implementations used as test oracles. None of these call
// into the library code they are compared against.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "ncsres/hybrid.hpp"
#include "ncsres/lti_model.hpp"

namespace oracles {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline MatrixXd naive_product(const MatrixXd& a, const MatrixXd& b) {
  MatrixXd c = MatrixXd::Zero(a.rows(), b.cols());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < b.cols(); ++j)
      for (int k = 0; k < a.cols(); ++k) c(i, j) += a(i, k) * b(k, j);
  return c;
}

/// Closed-loop blocks entry by entry, from the substitution u = Cc xc + Dc yhat,
/// yhat = y + eta, y = Cp xp.
inline ncsres::ClosedLoopMatrices naive_closed_loop(const ncsres::PlantModel& p,
                                                    const ncsres::ControllerModel& c,
                                                    const ncsres::PerformanceOutput& perf) {
  const int np = static_cast<int>(p.A.rows()), nc = static_cast<int>(c.A.rows());
  const int ny = static_cast<int>(p.C.rows()), nw = static_cast<int>(p.W.cols());
  const int n = np + nc;
  ncsres::ClosedLoopMatrices cl;
  const MatrixXd BD = naive_product(p.B, c.D);
  const MatrixXd BDC = naive_product(BD, p.C);
  const MatrixXd BC = naive_product(p.B, c.C);
  const MatrixXd BcC = naive_product(c.B, p.C);
  cl.Axx = MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i < np && j < np) cl.Axx(i, j) = p.A(i, j) + BDC(i, j);
      else if (i < np) cl.Axx(i, j) = BC(i, j - np);
      else if (j < np) cl.Axx(i, j) = BcC(i - np, j);
      else cl.Axx(i, j) = c.A(i - np, j - np);
    }
  cl.Axe = MatrixXd::Zero(n, ny);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < ny; ++j) cl.Axe(i, j) = i < np ? BD(i, j) : c.B(i - np, j);
  cl.Axw = MatrixXd::Zero(n, nw);
  for (int i = 0; i < np; ++i)
    for (int j = 0; j < nw; ++j) cl.Axw(i, j) = p.W(i, j);
  // eta' = -y' = -Cp xp'.
  cl.Aex = MatrixXd::Zero(ny, n);
  for (int i = 0; i < ny; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < np; ++k) cl.Aex(i, j) -= p.C(i, k) * cl.Axx(k, j);
  cl.Aee = -naive_product(p.C, BD);
  cl.Aew = -naive_product(p.C, p.W);
  cl.Co = perf.Co;
  return cl;
}

/// xtilde(t) for loss-free, zero-delay transmission: eta resets to zero at
/// every t_k = k Ts and (xtilde, eta) evolves linearly in between.
inline VectorXd loss_free_xtilde(const ncsres::ClosedLoopMatrices& cl, const VectorXd& x0, double Ts,
                                 double t) {
  const int nx = static_cast<int>(cl.Axx.rows()), ny = static_cast<int>(cl.Aee.rows());
  MatrixXd F(nx + ny, nx + ny);
  F << cl.Axx, cl.Axe, cl.Aex, cl.Aee;
  VectorXd z = VectorXd::Zero(nx + ny);
  z.head(nx) = x0;
  double tk = 0.0;
  while (tk + Ts <= t + 1e-12) {
    z = (F * Ts).exp() * z;
    z.tail(ny).setZero();
    tk += Ts;
  }
  z = (F * (t - tk)).exp() * z;
  return z.head(nx);
}

/// Original coordinates: plant and controller states, the held output yhat
/// and the in-flight measurement s_y.
struct OriginalState {
  VectorXd xp, xc, yhat, sy;
};

/// Sampled-data loop simulated directly in the original coordinates with
/// its own RK4 and event bookkeeping. Samples at k Ts copy y into s_y when
/// delivered; deliveries copy s_y into yhat.
inline OriginalState simulate_original(const ncsres::PlantModel& p, const ncsres::ControllerModel& c,
                                       const ncsres::NetworkParams& net,
                                       const ncsres::AttackSchedule& schedule, OriginalState x,
                                       const std::function<VectorXd(double)>& w, double horizon,
                                       double step) {
  auto rhs = [&](const VectorXd& xp, const VectorXd& xc, const VectorXd& yhat, double t,
                 VectorXd& dxp, VectorXd& dxc) {
    const VectorXd u = c.C * xc + c.D * yhat;
    dxp = p.A * xp + p.B * u + p.W * w(t);
    dxc = c.A * xc + c.B * yhat;
  };
  double t = 0.0;
  auto advance = [&](double t1) {
    const double len = t1 - t;
    if (len <= 0.0) return;
    const int n = std::max(1, static_cast<int>(std::ceil(len / step - 1e-9)));
    const double h = len / n;
    for (int i = 0; i < n; ++i) {
      const double ti = t + i * h;
      VectorXd a1, b1, a2, b2, a3, b3, a4, b4;
      rhs(x.xp, x.xc, x.yhat, ti, a1, b1);
      rhs(x.xp + h / 2 * a1, x.xc + h / 2 * b1, x.yhat, ti + h / 2, a2, b2);
      rhs(x.xp + h / 2 * a2, x.xc + h / 2 * b2, x.yhat, ti + h / 2, a3, b3);
      rhs(x.xp + h * a3, x.xc + h * b3, x.yhat, ti + h, a4, b4);
      x.xp += h / 6 * (a1 + 2 * a2 + 2 * a3 + a4);
      x.xc += h / 6 * (b1 + 2 * b2 + 2 * b3 + b4);
    }
    t = t1;
  };
  struct Pending {
    double t;
    bool valid;
  } update{0.0, false};
  for (std::size_t k = 0; k < schedule.entries.size(); ++k) {
    const double tk = static_cast<double>(k) * net.Ts;
    if (update.valid && update.t <= tk + 1e-12 && update.t < horizon) {
      advance(update.t);
      x.yhat = x.sy;
      update.valid = false;
    }
    if (tk >= horizon) break;
    const auto& e = schedule.entries[k];
    if (!e.delivered) continue;
    advance(tk);
    x.sy = p.C * x.xp;
    update = {std::min(tk + e.delay, tk + net.Ts), true};
    if (e.delay == 0.0) {
      x.yhat = x.sy;
      update.valid = false;
    }
  }
  if (update.valid && update.t < horizon) {
    advance(update.t);
    x.yhat = x.sy;
  }
  advance(horizon);
  return x;
}

}  // namespace oracles
