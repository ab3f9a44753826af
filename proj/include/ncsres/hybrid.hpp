#pragma once

// Hybrid closed loop in (xtilde, eta, sigma, tau, l) coordinates: flow map, jump
// map, flow/jump sets, the attractor A and admissible DoS / delay schedules.
//
//   l = 0 : waiting for the next successful sampling instant
//   l = 1 : a sample is in flight, waiting for its delivery
//
// tau counts the time elapsed since the last successful sampling instant.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "ncsres/errors.hpp"
#include "ncsres/lti_model.hpp"

namespace ncsres {

/// Timing tolerance used for "tau is a multiple of Ts" and interval endpoints.
inline constexpr double kTauTolerance = 1e-9;

struct NetworkParams {
  double Ts = 0.0;    ///< sampling period [s]
  int Delta = 0;      ///< max number of successive packet dropouts
  double Tmad = 0.0;  ///< max allowable delay [s], 0 <= Tmad <= Ts

  double max_silence() const { return (Delta + 1) * Ts; }

  void validate() const {
    if (!(std::isfinite(Ts) && Ts > 0.0)) throw ValidationError("network.Ts must be positive");
    if (Delta < 0) throw ValidationError("network.Delta must be nonnegative");
    if (!(std::isfinite(Tmad) && Tmad >= 0.0 && Tmad <= Ts))
      throw ValidationError("network.Tmad must lie in [0, Ts]");
  }
};

struct HybridState {
  VectorXd xtilde;
  VectorXd eta;
  VectorXd sigma;
  double tau = 0.0;
  int l = 0;

  static HybridState zero(int n_x, int n_y, double tau = 0.0, int l = 0) {
    return {VectorXd::Zero(n_x), VectorXd::Zero(n_y), VectorXd::Zero(n_y), tau, l};
  }

  double norm() const {
    return std::sqrt(xtilde.squaredNorm() + eta.squaredNorm() + sigma.squaredNorm());
  }
};

/// Time derivative of a HybridState along the flow. tau' = 1 and l' = 0 always.
struct FlowDerivative {
  VectorXd xtilde;
  VectorXd eta;
  VectorXd sigma;
  double tau = 1.0;
  double l = 0.0;
};

inline void check_state_dims(const ClosedLoopMatrices& cl, const HybridState& s) {
  if (s.xtilde.size() != cl.n_x())
    throw DimensionError("state xtilde has size " + std::to_string(s.xtilde.size()) + ", expected " +
                         std::to_string(cl.n_x()));
  if (s.eta.size() != cl.n_y() || s.sigma.size() != cl.n_y())
    throw DimensionError("state eta/sigma size does not match the plant output dimension " +
                         std::to_string(cl.n_y()));
}

inline FlowDerivative flow_derivative(const ClosedLoopMatrices& cl, const HybridState& s,
                                      const VectorXd& w) {
  check_state_dims(cl, s);
  if (w.size() != cl.n_w())
    throw DimensionError("disturbance has size " + std::to_string(w.size()) + ", expected " +
                         std::to_string(cl.n_w()));
  FlowDerivative d;
  d.xtilde = cl.Axx * s.xtilde + cl.Axe * s.eta + cl.Axw * w;
  d.eta = cl.Aex * s.xtilde + cl.Aee * s.eta + cl.Aew * w;
  d.sigma = d.eta;
  return d;
}

inline bool in_flow_set(const HybridState& s, const NetworkParams& net) {
  if (s.tau < -kTauTolerance) return false;
  if (s.l == 0) return s.tau <= net.max_silence() + kTauTolerance;
  if (s.l == 1) return s.tau <= net.Tmad + kTauTolerance;
  return false;
}

/// Number m in {1..Delta+1} with tau ~= m Ts, if any.
inline std::optional<int> sampling_multiple(double tau, const NetworkParams& net) {
  const double m = std::round(tau / net.Ts);
  if (m < 1.0 || m > net.Delta + 1) return std::nullopt;
  if (std::abs(tau - m * net.Ts) > kTauTolerance) return std::nullopt;
  return static_cast<int>(m);
}

inline bool in_jump_set(const HybridState& s, const NetworkParams& net) {
  if (s.l == 0) return sampling_multiple(s.tau, net).has_value();
  if (s.l == 1) return s.tau >= -kTauTolerance && s.tau <= net.Tmad + kTauTolerance;
  return false;
}

/// g(x) = (xtilde, l sigma + (1-l) eta, l sigma, l tau, 1-l).
inline HybridState apply_jump_map(const HybridState& s) {
  HybridState next = s;
  if (s.l == 0) {
    next.sigma.setZero();
    next.tau = 0.0;
    next.l = 1;
  } else {
    next.eta = s.sigma;
    next.l = 0;
  }
  return next;
}

inline HybridState jump(const HybridState& s, const NetworkParams& net) {
  if (!in_jump_set(s, net))
    throw ValidationError("state (tau=" + std::to_string(s.tau) + ", l=" + std::to_string(s.l) +
                          ") is not in the jump set");
  return apply_jump_map(s);
}

/// A = {0} x {0} x {0} x [0, (Delta+1) Ts] x {0,1}.
struct TargetSet {
  int Delta = 0;
  double Ts = 0.0;
};

inline double distance_to_target(const HybridState& s, const TargetSet& target) {
  const double upper = (target.Delta + 1) * target.Ts;
  const double dtau = s.tau < 0.0 ? -s.tau : (s.tau > upper ? s.tau - upper : 0.0);
  const double dl = s.l < 0 ? -s.l : (s.l > 1 ? s.l - 1 : 0);
  return std::sqrt(s.xtilde.squaredNorm() + s.eta.squaredNorm() + s.sigma.squaredNorm() +
                   dtau * dtau + static_cast<double>(dl) * dl);
}

// ---------------------------------------------------------------------------
// Attack schedules

struct ScheduleEntry {
  bool delivered = true;
  double delay = 0.0;  ///< meaningful only when delivered

  static ScheduleEntry drop() { return {false, 0.0}; }
  static ScheduleEntry deliver(double d) { return {true, d}; }

  bool operator==(const ScheduleEntry&) const = default;
};

/// One entry per sampling instant t_k = k Ts, k = 0 .. size()-1.
struct AttackSchedule {
  std::vector<ScheduleEntry> entries;

  std::size_t horizon() const { return entries.size(); }
  bool operator==(const AttackSchedule&) const = default;
};

struct ScheduleViolation {
  enum class Kind { DropRunTooLong, DelayOutOfBounds };
  Kind kind;
  std::size_t index;
  std::string message;
};

inline std::optional<ScheduleViolation> validate_schedule(const AttackSchedule& a,
                                                          const NetworkParams& net) {
  int run = 0;
  for (std::size_t k = 0; k < a.entries.size(); ++k) {
    const auto& e = a.entries[k];
    if (!e.delivered) {
      if (++run > net.Delta)
        return ScheduleViolation{ScheduleViolation::Kind::DropRunTooLong, k,
                                 "run of " + std::to_string(run) +
                                     " consecutive drops exceeds Delta=" + std::to_string(net.Delta) +
                                     " at sample " + std::to_string(k)};
      continue;
    }
    run = 0;
    if (!(std::isfinite(e.delay) && e.delay >= 0.0 && e.delay <= net.Tmad + kTauTolerance))
      return ScheduleViolation{ScheduleViolation::Kind::DelayOutOfBounds, k,
                               "delay " + std::to_string(e.delay) + " at sample " + std::to_string(k) +
                                   " violates the delay bound [0, Tmad=" + std::to_string(net.Tmad) +
                                   "]"};
  }
  return std::nullopt;
}

namespace detail {

inline AttackSchedule periodic(std::size_t horizon, int drops, double delay) {
  AttackSchedule s;
  s.entries.reserve(horizon);
  while (s.entries.size() < horizon) {
    for (int i = 0; i < drops && s.entries.size() < horizon; ++i)
      s.entries.push_back(ScheduleEntry::drop());
    if (s.entries.size() < horizon) s.entries.push_back(ScheduleEntry::deliver(delay));
  }
  return s;
}

}  // namespace detail

/// Deterministic battery of admissible schedules: the structured worst cases
/// first, then `random_count` seeded random admissible schedules.
inline std::vector<AttackSchedule> enumerate_worst_schedules(const NetworkParams& net,
                                                             std::size_t horizon,
                                                             std::size_t random_count = 0,
                                                             std::uint64_t seed = 0) {
  net.validate();
  if (horizon < 1) throw ValidationError("schedule horizon must be at least one sample");
  std::vector<AttackSchedule> out;
  const double dmax = net.Tmad;

  // Delta drops then one success, with the largest and the smallest delay.
  out.push_back(detail::periodic(horizon, net.Delta, dmax));
  out.push_back(detail::periodic(horizon, net.Delta, 0.0));
  // Never dropped, always maximally delayed / never delayed.
  out.push_back(detail::periodic(horizon, 0, dmax));
  out.push_back(detail::periodic(horizon, 0, 0.0));
  // Alternating delays without drops.
  {
    AttackSchedule s;
    for (std::size_t k = 0; k < horizon; ++k)
      s.entries.push_back(ScheduleEntry::deliver(k % 2 == 0 ? dmax : 0.0));
    out.push_back(std::move(s));
  }
  // Bursts of every intermediate length.
  for (int d = 1; d < net.Delta; ++d) out.push_back(detail::periodic(horizon, d, dmax));

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> burst(0, net.Delta);
  for (std::size_t r = 0; r < random_count; ++r) {
    AttackSchedule s;
    s.entries.reserve(horizon);
    // Probability of starting an attack after a success varies per schedule.
    const double p_attack = unit(rng);
    while (s.entries.size() < horizon) {
      if (net.Delta > 0 && unit(rng) < p_attack) {
        const int n = burst(rng);
        for (int i = 0; i < n && s.entries.size() < horizon; ++i)
          s.entries.push_back(ScheduleEntry::drop());
      }
      if (s.entries.size() < horizon) {
        const double u = unit(rng);
        // Bias towards the extreme delays, which are the interesting cases.
        const double d = u < 0.3 ? dmax : (u < 0.5 ? 0.0 : unit(rng) * dmax);
        s.entries.push_back(ScheduleEntry::deliver(d));
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace ncsres
