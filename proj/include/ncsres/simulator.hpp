#pragma once

// Event-exact simulation of the hybrid closed loop. Sampling instants k Ts and
// delivery instants k Ts + d_k come from the attack schedule; RK4 steps are
// split so that they land on those instants. Dropped samples cause no jump.

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "ncsres/certificate.hpp"
#include "ncsres/errors.hpp"
#include "ncsres/hybrid.hpp"
#include "ncsres/io.hpp"

namespace ncsres {

inline constexpr double kDivergenceBound = 1e12;
inline constexpr double kGainTolerance = 0.02;

// ---------------------------------------------------------------------------
// Disturbances

class DisturbanceSignal {
 public:
  enum class Kind { Zero, PiecewiseConstant, Sinusoid };

  static DisturbanceSignal zero(int n_w) {
    DisturbanceSignal s;
    s.kind_ = Kind::Zero;
    s.n_w_ = n_w;
    return s;
  }

  /// values.col(i) holds on [breakpoints[i], breakpoints[i+1]); zero before breakpoints[0].
  static DisturbanceSignal piecewise_constant(std::vector<double> breakpoints, MatrixXd values) {
    if (breakpoints.empty() || static_cast<Eigen::Index>(breakpoints.size()) != values.cols())
      throw ValidationError("piecewise-constant disturbance needs one value column per breakpoint");
    if (!std::is_sorted(breakpoints.begin(), breakpoints.end()) ||
        std::adjacent_find(breakpoints.begin(), breakpoints.end()) != breakpoints.end())
      throw ValidationError("disturbance breakpoints must be strictly increasing");
    if (!values.allFinite()) throw ValidationError("disturbance values must be finite");
    DisturbanceSignal s;
    s.kind_ = Kind::PiecewiseConstant;
    s.n_w_ = static_cast<int>(values.rows());
    s.breakpoints_ = std::move(breakpoints);
    s.values_ = std::move(values);
    return s;
  }

  /// w_i(t) = amplitude_i sin(frequency_i t + phase_i), frequency in rad/s.
  static DisturbanceSignal sinusoid(VectorXd amplitude, VectorXd frequency, VectorXd phase) {
    if (amplitude.size() != frequency.size() || amplitude.size() != phase.size() || amplitude.size() == 0)
      throw ValidationError("sinusoid amplitude, frequency and phase need one entry per channel");
    if (!amplitude.allFinite() || !frequency.allFinite() || !phase.allFinite())
      throw ValidationError("sinusoid parameters must be finite");
    DisturbanceSignal s;
    s.kind_ = Kind::Sinusoid;
    s.n_w_ = static_cast<int>(amplitude.size());
    s.amplitude_ = std::move(amplitude);
    s.frequency_ = std::move(frequency);
    s.phase_ = std::move(phase);
    return s;
  }

  Kind kind() const { return kind_; }
  int n_w() const { return n_w_; }
  const std::vector<double>& breakpoints() const { return breakpoints_; }

  VectorXd operator()(double t) const {
    switch (kind_) {
      case Kind::Zero:
        return VectorXd::Zero(n_w_);
      case Kind::PiecewiseConstant: {
        const auto it = std::upper_bound(breakpoints_.begin(), breakpoints_.end(), t);
        if (it == breakpoints_.begin()) return VectorXd::Zero(n_w_);
        return values_.col(std::distance(breakpoints_.begin(), it) - 1);
      }
      case Kind::Sinusoid: {
        VectorXd w(n_w_);
        for (int i = 0; i < n_w_; ++i) w(i) = amplitude_(i) * std::sin(frequency_(i) * t + phase_(i));
        return w;
      }
    }
    return VectorXd::Zero(n_w_);
  }

  /// sup_t |w(t)|. For sinusoids this is |amplitude|, attained when the
  /// channels share frequency and phase and an upper bound otherwise.
  double sup_norm() const {
    switch (kind_) {
      case Kind::Zero: return 0.0;
      case Kind::PiecewiseConstant: return values_.colwise().norm().maxCoeff();
      case Kind::Sinusoid: return amplitude_.norm();
    }
    return 0.0;
  }

  DisturbanceSignal scaled(double c) const {
    DisturbanceSignal s = *this;
    s.values_ *= c;
    s.amplitude_ *= c;
    return s;
  }

 private:
  Kind kind_ = Kind::Zero;
  int n_w_ = 0;
  std::vector<double> breakpoints_;
  MatrixXd values_;
  VectorXd amplitude_, frequency_, phase_;
};

// ---------------------------------------------------------------------------
// Trajectories

struct TrajectorySample {
  double t = 0.0;
  int j = 0;
  HybridState state;
};

enum class EventKind { Sample, Update };

inline const char* to_string(EventKind k) { return k == EventKind::Sample ? "sample" : "update"; }

struct TrajectoryEvent {
  double t = 0.0;
  EventKind kind = EventKind::Sample;
  std::size_t k = 0;
};

struct HybridTrajectory {
  std::vector<TrajectorySample> samples;
  std::vector<TrajectoryEvent> events;

  double final_time() const { return samples.empty() ? 0.0 : samples.back().t; }
  int jumps() const { return samples.empty() ? 0 : samples.back().j; }
};

/// j <= jumps_per_period * t / Ts + 3 at every sample.
inline bool satisfies_dwell_time(const HybridTrajectory& traj, double Ts, double jumps_per_period) {
  for (const auto& s : traj.samples)
    if (s.j > jumps_per_period * s.t / Ts + 3.0 + 1e-9) return false;
  return true;
}

/// The literal average-dwell-time claim j <= t/Ts + 3. Every delivered sample
/// costs two jumps (sample and update), so a loss-free schedule breaks it at
/// t = 2 Ts (j = 6).
inline bool satisfies_dwell_time(const HybridTrajectory& traj, double Ts) {
  return satisfies_dwell_time(traj, Ts, 1.0);
}

/// The bound the jump map actually guarantees: at most two jumps per sampling
/// period, j <= 2 t/Ts + 3.
inline bool satisfies_two_jump_dwell_time(const HybridTrajectory& traj, double Ts) {
  return satisfies_dwell_time(traj, Ts, 2.0);
}

struct SimulationOptions {
  double horizon = 1.0;
  double step = 0.0;  ///< 0 selects min(Ts/100, Tmad/4)
};

namespace detail {

inline double default_step(const NetworkParams& net) {
  double h = net.Ts / 100.0;
  if (net.Tmad > 0.0) h = std::min(h, net.Tmad / 4.0);
  return h;
}

struct ScheduledEvent {
  double t;
  EventKind kind;
  std::size_t k;
};

/// Events strictly before the horizon, in execution order: sample k, then its
/// update, then sample k+1. An update landing on the next sampling instant
/// therefore comes first.
inline std::vector<ScheduledEvent> schedule_events(const AttackSchedule& a, const NetworkParams& net,
                                                   double horizon) {
  std::vector<ScheduledEvent> ev;
  for (std::size_t k = 0; k < a.entries.size(); ++k) {
    const double tk = static_cast<double>(k) * net.Ts;
    if (tk >= horizon) break;
    const auto& e = a.entries[k];
    if (!e.delivered) continue;
    ev.push_back({tk, EventKind::Sample, k});
    const double tu = std::min(tk + e.delay, static_cast<double>(k + 1) * net.Ts);
    if (tu < horizon) ev.push_back({tu, EventKind::Update, k});
  }
  return ev;
}

inline void check_simulation_inputs(const ClosedLoopMatrices& cl, const NetworkParams& net,
                                    const AttackSchedule& a, const HybridState& x0,
                                    const DisturbanceSignal& w, double horizon, double step) {
  net.validate();
  check_state_dims(cl, x0);
  if (w.n_w() != cl.n_w()) throw DimensionError("disturbance has " + std::to_string(w.n_w()) +
                                                " channels, the plant expects " + std::to_string(cl.n_w()));
  if (!(horizon > 0.0) || !std::isfinite(horizon)) throw ValidationError("horizon must be positive");
  if (!(step > 0.0)) throw ValidationError("integration step must be positive");
  if (step > net.Ts / 20.0 * (1 + 1e-12)) throw ValidationError("integration step must not exceed Ts/20");
  if (net.Tmad > 0.0 && step > net.Tmad / 4.0 * (1 + 1e-12))
    throw ValidationError("integration step must not exceed Tmad/4");
  if (x0.l != 0) throw ValidationError("initial state must await a sample (l = 0)");
  if (!in_flow_set(x0, net)) throw ValidationError("initial state is not in the flow set");
  if (static_cast<double>(a.horizon()) * net.Ts < horizon - 1e-12)
    throw ValidationError("schedule covers " + std::to_string(a.horizon()) + " samples, fewer than the horizon needs");
  if (auto v = validate_schedule(a, net)) throw ValidationError("inadmissible schedule: " + v->message);
}

inline void rk4_step(const ClosedLoopMatrices& cl, HybridState& s, const DisturbanceSignal& w, double t,
                     double h) {
  auto add = [](const HybridState& s0, const FlowDerivative& d, double c) {
    HybridState r = s0;
    r.xtilde += c * d.xtilde;
    r.eta += c * d.eta;
    r.sigma += c * d.sigma;
    r.tau += c * d.tau;
    return r;
  };
  const FlowDerivative k1 = flow_derivative(cl, s, w(t));
  const FlowDerivative k2 = flow_derivative(cl, add(s, k1, h / 2), w(t + h / 2));
  const FlowDerivative k3 = flow_derivative(cl, add(s, k2, h / 2), w(t + h / 2));
  const FlowDerivative k4 = flow_derivative(cl, add(s, k3, h), w(t + h));
  s.xtilde += h / 6 * (k1.xtilde + 2 * k2.xtilde + 2 * k3.xtilde + k4.xtilde);
  s.eta += h / 6 * (k1.eta + 2 * k2.eta + 2 * k3.eta + k4.eta);
  s.sigma += h / 6 * (k1.sigma + 2 * k2.sigma + 2 * k3.sigma + k4.sigma);
  s.tau += h;
}

/// Sub-interval ends for a flow from t0 to t1: disturbance breakpoints inside
/// the interval, then t1.
inline std::vector<double> flow_knots(const DisturbanceSignal& w, double t0, double t1) {
  std::vector<double> knots;
  for (double b : w.breakpoints())
    if (b > t0 && b < t1) knots.push_back(b);
  knots.push_back(t1);
  return knots;
}

}  // namespace detail

/// Schedule-selected solution from x0 (l = 0) over [0, horizon]. Entry k of
/// the schedule governs the transmission at t = k Ts; with tau0 = Ts the
/// admissibility of the schedule matches the jump set exactly.
inline HybridTrajectory simulate(const ClosedLoopMatrices& cl, const NetworkParams& net,
                                 const AttackSchedule& schedule, const HybridState& x0,
                                 const DisturbanceSignal& w, const SimulationOptions& opt = {}) {
  const double step = opt.step > 0.0 ? opt.step : detail::default_step(net);
  detail::check_simulation_inputs(cl, net, schedule, x0, w, opt.horizon, step);

  HybridTrajectory traj;
  HybridState s = x0;
  double t = 0.0;
  int j = 0;
  auto record = [&] {
    if (!(s.norm() <= kDivergenceBound))
      throw DivergenceError("state norm exceeded " + format_double(kDivergenceBound) + " at t=" +
                            format_double(t) + ", j=" + std::to_string(j));
    if (!in_flow_set(s, net) && !in_jump_set(s, net))
      throw std::logic_error("state left C and D at t=" + format_double(t));
    if (j > 2.0 * t / net.Ts + 3.0 + 1e-9)
      throw std::logic_error("dwell-time bound j <= 2t/Ts + 3 violated at t=" + format_double(t));
    traj.samples.push_back({t, j, s});
  };
  auto flow_to = [&](double t_end) {
    double t0 = t;
    for (double knot : detail::flow_knots(w, t0, t_end)) {
      const double len = knot - t0;
      if (len > 0.0) {
        const int n = std::max(1, static_cast<int>(std::ceil(len / step - 1e-9)));
        const double h = len / n;
        for (int i = 0; i < n; ++i) {
          detail::rk4_step(cl, s, w, t, h);
          t = (i + 1 == n) ? knot : t0 + (i + 1) * h;
          // Rounding in the timer must not push it off the flow-set boundary.
          const double cap = s.l == 0 ? net.max_silence() : net.Tmad;
          if (s.tau > cap && s.tau <= cap + kTauTolerance) s.tau = cap;
          if (!in_flow_set(s, net))
            throw std::logic_error("flow left C at t=" + format_double(t) + " (tau=" +
                                   format_double(s.tau) + ", l=" + std::to_string(s.l) + ")");
          record();
        }
      }
      t0 = knot;
    }
  };

  record();
  for (const auto& ev : detail::schedule_events(schedule, net, opt.horizon)) {
    flow_to(ev.t);
    // Timers accumulate rounding; the schedule, not tau, decides when to jump.
    if (ev.kind == EventKind::Sample) {
      const auto m = sampling_multiple(s.tau, net);
      if (s.l != 0 || !m)
        throw std::logic_error("scheduled sample " + std::to_string(ev.k) + " at t=" + format_double(ev.t) +
                               " is not in the jump set (tau=" + format_double(s.tau) + ")");
      s.tau = *m * net.Ts;
    }
    s = jump(s, net);
    ++j;
    traj.events.push_back({t, ev.kind, ev.k});
    record();
  }
  flow_to(opt.horizon);
  return traj;
}

// ---------------------------------------------------------------------------
// Certificate monitoring

inline double trapezoid(const std::vector<double>& t, const std::vector<double>& f) {
  double acc = 0.0;
  for (std::size_t i = 1; i < t.size(); ++i) acc += 0.5 * (f[i] + f[i - 1]) * (t[i] - t[i - 1]);
  return acc;
}

struct SimulationMetrics {
  double eps_mon = 0.0;
  double max_jump_increase = -std::numeric_limits<double>::infinity();
  double max_flow_residual = -std::numeric_limits<double>::infinity();
  /// max over samples of |x|_A - envelope; <= 0 when the eISS bound holds.
  double max_envelope_excess = -std::numeric_limits<double>::infinity();
  double output_energy = 0.0;  ///< int |y_o|^2
  double input_energy = 0.0;   ///< int |w|^2
  double l2_lhs = 0.0, l2_rhs = 0.0;
  double empirical_gain = std::numeric_limits<double>::quiet_NaN();
  double decay_rate = std::numeric_limits<double>::quiet_NaN();  ///< -ln(|x(T)|_A / |x0|_A) / T
  double overshoot = std::numeric_limits<double>::quiet_NaN();   ///< max |x|_A / |x0|_A
  /// False when the certificate has no flow decay rate; the envelope and L2
  /// checks are then skipped and only the jump and flow inequalities count.
  bool bounds_valid = false;
  int jump_violations = 0;
  int flow_violations = 0;
  int envelope_violations = 0;
  bool l2_checked = false;
  bool l2_violation = false;

  int violations() const {
    return jump_violations + flow_violations + envelope_violations + (l2_violation ? 1 : 0);
  }
  bool passed() const { return violations() == 0; }
};

/// Checks a trajectory against the certificate's claims: V does not increase
/// at jumps, the flow inequality holds, |x|_A stays under the eISS envelope,
/// and (input-output mode) the L2 inequality holds. Works on certificates
/// that fail check_certificate too, so corrupted ones can be caught in action.
inline SimulationMetrics monitor_certificate(const HybridTrajectory& traj, const Certificate& cert,
                                             const ClosedLoopMatrices& cl, const DisturbanceSignal& w) {
  if (traj.samples.empty()) throw ValidationError("empty trajectory");
  const CertificateBounds b = detail::bounds_unchecked(cert, cl);
  const bool bounds_valid = b.flow_margin > 0.0 && b.rho1 > 0.0;
  const bool io = cert.mode == StabilityMode::InputOutput;
  const double gamma = cert.params.gamma;
  const TargetSet target{cert.net.Delta, cert.net.Ts};

  SimulationMetrics m;
  m.bounds_valid = bounds_valid;
  const auto& S = traj.samples;
  const double V0 = evaluate_V(cert, S.front().state);
  const double d0 = distance_to_target(S.front().state, target);
  const double wsup = w.sup_norm();
  m.eps_mon = 1e-6 * (1.0 + V0);

  std::vector<double> ts, yo2, w2;
  double dmax = 0.0;
  for (std::size_t i = 0; i < S.size(); ++i) {
    const auto& smp = S[i];
    const VectorXd wt = w(smp.t);
    const double V = evaluate_V(cert, smp.state);
    const VectorXd yo = cl.Co * smp.state.xtilde;
    if (i > 0 && smp.j == S[i - 1].j + 1) {
      const double inc = V - evaluate_V(cert, S[i - 1].state);
      m.max_jump_increase = std::max(m.max_jump_increase, inc);
      if (inc > m.eps_mon) ++m.jump_violations;
    }
    double r = evaluate_V_flow_derivative(cert, cl, smp.state, wt) + 2.0 * std::max(b.lambda_t, 0.0) * V;
    if (io) r += yo.squaredNorm() - gamma * gamma * wt.squaredNorm();
    m.max_flow_residual = std::max(m.max_flow_residual, r);
    if (r > m.eps_mon) ++m.flow_violations;

    const double dist = distance_to_target(smp.state, target);
    if (bounds_valid) {
      const double envelope =
          std::max(b.kappa * std::exp(-b.lambda_t * smp.t) * d0, io ? b.gain_fn_coeff * wsup : 0.0);
      const double excess = dist - envelope;
      m.max_envelope_excess = std::max(m.max_envelope_excess, excess);
      if (excess > 1e-9 * (1.0 + envelope)) ++m.envelope_violations;
    }
    dmax = std::max(dmax, dist);

    ts.push_back(smp.t);
    yo2.push_back(yo.squaredNorm());
    w2.push_back(wt.squaredNorm());
  }
  m.output_energy = trapezoid(ts, yo2);
  m.input_energy = trapezoid(ts, w2);
  if (m.input_energy > 0.0) m.empirical_gain = std::sqrt(m.output_energy / m.input_energy);
  if (d0 > 0.0) {
    m.overshoot = dmax / d0;
    const double dT = distance_to_target(S.back().state, target);
    if (S.back().t > 0.0 && dT > 0.0) m.decay_rate = -std::log(dT / d0) / S.back().t;
  }
  if (io && bounds_valid) {
    m.l2_checked = true;
    m.l2_lhs = std::sqrt(m.output_energy);
    m.l2_rhs = b.l2_alpha * d0 + gamma * std::sqrt(m.input_energy);
    m.l2_violation = m.l2_lhs > (1.0 + kGainTolerance) * m.l2_rhs + 1e-12;
  }
  return m;
}

// ---------------------------------------------------------------------------
// Empirical L2 gain from x0 in A

struct L2Run {
  AttackSchedule schedule;
  DisturbanceSignal disturbance;
};

struct L2GainResult {
  double worst_gain = 0.0;
  std::size_t worst_run = 0;
  double bound = 0.0;  ///< gamma (1 + eps_gain)
  std::vector<double> gains;
  bool passed() const { return worst_gain <= bound; }
};

inline HybridState initial_state_at_target(const ClosedLoopMatrices& cl, const NetworkParams& net) {
  return HybridState::zero(cl.n_x(), cl.n_y(), net.Ts, 0);
}

inline L2GainResult empirical_l2_gain(const ClosedLoopMatrices& cl, const Certificate& cert,
                                      const std::vector<L2Run>& runs, const SimulationOptions& opt,
                                      unsigned threads = 0) {
  const auto& net = cert.net;
  const HybridState x0 = initial_state_at_target(cl, net);
  auto gain_of = [&](const L2Run& r) {
    const auto traj = simulate(cl, net, r.schedule, x0, r.disturbance, opt);
    std::vector<double> ts, yo2, w2;
    for (const auto& s : traj.samples) {
      ts.push_back(s.t);
      yo2.push_back((cl.Co * s.state.xtilde).squaredNorm());
      w2.push_back(r.disturbance(s.t).squaredNorm());
    }
    const double in = trapezoid(ts, w2);
    if (!(in > 0.0)) throw ValidationError("empirical L2 gain needs a disturbance with positive energy");
    return std::sqrt(trapezoid(ts, yo2) / in);
  };

  L2GainResult res;
  res.bound = cert.params.gamma * (1.0 + kGainTolerance);
  res.gains.resize(runs.size());
  const unsigned n = std::max(1u, threads ? threads : std::thread::hardware_concurrency());
  for (std::size_t begin = 0; begin < runs.size(); begin += n) {
    const std::size_t end = std::min(runs.size(), begin + n);
    std::vector<std::future<double>> futs;
    for (std::size_t i = begin; i < end; ++i)
      futs.push_back(std::async(n == 1 ? std::launch::deferred : std::launch::async,
                                [&, i] { return gain_of(runs[i]); }));
    for (std::size_t i = begin; i < end; ++i) res.gains[i] = futs[i - begin].get();
  }
  for (std::size_t i = 0; i < res.gains.size(); ++i)
    if (res.gains[i] > res.worst_gain) {
      res.worst_gain = res.gains[i];
      res.worst_run = i;
    }
  return res;
}

// ---------------------------------------------------------------------------
// CSV

/// Columns t,j,l,tau,xtilde...,eta...,sigma...,V,dist_A. V is left empty without a certificate.
inline std::string trajectory_to_csv(const HybridTrajectory& traj, const NetworkParams& net,
                                     const Certificate* cert = nullptr) {
  std::ostringstream os;
  if (traj.samples.empty()) return "";
  const auto& s0 = traj.samples.front().state;
  os << "t,j,l,tau";
  for (Eigen::Index i = 0; i < s0.xtilde.size(); ++i) os << ",xtilde" << i;
  for (Eigen::Index i = 0; i < s0.eta.size(); ++i) os << ",eta" << i;
  for (Eigen::Index i = 0; i < s0.sigma.size(); ++i) os << ",sigma" << i;
  os << ",V,dist_A\n";
  const TargetSet target{net.Delta, net.Ts};
  for (const auto& smp : traj.samples) {
    const auto& s = smp.state;
    os << format_double(smp.t) << ',' << smp.j << ',' << s.l << ',' << format_double(s.tau);
    for (Eigen::Index i = 0; i < s.xtilde.size(); ++i) os << ',' << format_double(s.xtilde(i));
    for (Eigen::Index i = 0; i < s.eta.size(); ++i) os << ',' << format_double(s.eta(i));
    for (Eigen::Index i = 0; i < s.sigma.size(); ++i) os << ',' << format_double(s.sigma(i));
    os << ',' << (cert ? format_double(evaluate_V(*cert, s)) : std::string(""));
    os << ',' << format_double(distance_to_target(s, target)) << '\n';
  }
  return os.str();
}

inline std::string events_to_csv(const HybridTrajectory& traj) {
  std::ostringstream os;
  os << "t,j,kind,k\n";
  for (std::size_t i = 0; i < traj.events.size(); ++i) {
    const auto& e = traj.events[i];
    os << format_double(e.t) << ',' << i + 1 << ',' << to_string(e.kind) << ',' << e.k << '\n';
  }
  return os.str();
}

}  // namespace ncsres
