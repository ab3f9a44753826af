#pragma once

#include <random>
#include <string>

#include <Eigen/Dense>

#include "ncsres/io.hpp"

namespace fixtures {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline std::string data_path(const std::string& name) { return std::string(NCSRES_DATA_DIR) + "/" + name; }

inline ncsres::Model batch_reactor() { return ncsres::load_model(data_path("batch_reactor.json")); }
inline ncsres::Model scalar() { return ncsres::load_model(data_path("scalar.json")); }

// Hand-rolled generators for the property tests.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  double normal() { return gauss_(rng_); }

  MatrixXd matrix(int r, int c) {
    MatrixXd m(r, c);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) m(i, j) = normal();
    return m;
  }
  VectorXd vector(int n) { return matrix(n, 1); }

  MatrixXd spd(int n, double floor = 0.1) {
    const MatrixXd a = matrix(n, n);
    return a * a.transpose() + floor * MatrixXd::Identity(n, n);
  }

  MatrixXd symmetric(int n) {
    const MatrixXd a = matrix(n, n);
    return 0.5 * (a + a.transpose());
  }

  /// Random plant/controller/performance with consistent dimensions.
  ncsres::Model model(int nxp, int nxc, int nu, int ny, int nw, double Ts = 0.01) {
    ncsres::Model m;
    m.plant = {matrix(nxp, nxp), matrix(nxp, nu), matrix(ny, nxp), matrix(nxp, nw)};
    m.controller = {matrix(nxc, nxc), matrix(nxc, ny), matrix(nu, nxc), matrix(nu, ny)};
    m.performance.Co = matrix(integer(1, 3), nxp + nxc);
    m.network = {Ts, 0, 0.0};
    return m;
  }

  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
  std::normal_distribution<double> gauss_{0.0, 1.0};
};

}  // namespace fixtures
