#pragma once

// Trade-off between the number of tolerated consecutive dropouts (Delta) and
// the maximum allowable delay (Tmad): for Delta = 0, 1, 2, ... maximize Tmad on
// [0, Ts] by bisection, where a Tmad is achievable iff some delta on a
// geometric grid yields a verified certificate.

#include <algorithm>
#include <cmath>
#include <future>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "ncsres/io.hpp"
#include "ncsres/synthesis.hpp"

namespace ncsres {

/// exp(-delta (Delta+1) Ts) >= 1e-12  <=>  delta (Delta+1) Ts <= ln(1e12) ~ 27.63.
inline constexpr double kMaxDecayExponent = 27.6;

struct SearchPolicy {
  double delta_min = 1e-2;
  double delta_max = 0.0;  ///< 0 selects kMaxDecayExponent / ((delta_cap + 1) Ts)
  int delta_points = 24;
  double tmad_tolerance = 1e-5;
  int delta_cap = 10;
  StabilityMode mode = StabilityMode::ZeroInput;
  double gamma = 5.0;
  unsigned threads = 0;  ///< 0 = hardware concurrency
  lmi::SolverOptions solver;

  double effective_delta_max(double Ts) const {
    return delta_max > 0.0 ? delta_max : kMaxDecayExponent / ((delta_cap + 1) * Ts);
  }

  void validate(double Ts) const {
    if (!(delta_min > 0.0)) throw ValidationError("delta grid minimum must be positive");
    const double dmax = effective_delta_max(Ts);
    if (!(dmax >= delta_min)) throw ValidationError("delta grid maximum is below its minimum");
    if (dmax * (delta_cap + 1) * Ts > kMaxDecayExponent * (1.0 + 1e-12))
      throw ValidationError("delta_max (Delta_cap + 1) Ts exceeds " + std::to_string(kMaxDecayExponent) +
                            "; exp(-delta (Delta+1) Ts) would drop below 1e-12");
    if (delta_points < 1) throw ValidationError("delta grid needs at least one point");
    if (!(tmad_tolerance > 0.0)) throw ValidationError("Tmad tolerance must be positive");
    if (delta_cap < 0) throw ValidationError("Delta cap must be nonnegative");
    if (mode == StabilityMode::InputOutput && !(gamma > 0.0))
      throw ValidationError("gamma must be positive");
  }
};

inline std::vector<double> delta_grid(const SearchPolicy& policy, double Ts) {
  const double lo = policy.delta_min;
  const double hi = policy.effective_delta_max(Ts);
  std::vector<double> g;
  if (policy.delta_points == 1) return {lo};
  for (int i = 0; i < policy.delta_points; ++i)
    g.push_back(lo * std::pow(hi / lo, static_cast<double>(i) / (policy.delta_points - 1)));
  return g;
}

struct SearchStats {
  int solves = 0;
  int feasible_solves = 0;
  double solve_time = 0.0;
  /// Re-solving at (delta_star, Tmad_star / 2) succeeded.
  bool downward_monotone = true;
};

struct TradeoffPoint {
  int Delta = 0;
  double tmad_star = 0.0;
  double delta_star = 0.0;
  Certificate certificate;
  SearchStats stats;
};

namespace detail {

struct Witness {
  std::size_t grid_index = 0;
  Certificate certificate;
};

/// First delta (in the order: preferred index, then ascending) with a
/// verified certificate. Chunks of `threads` candidates run concurrently; the
/// answer does not depend on the thread count.
inline std::optional<Witness> first_feasible_delta(const ClosedLoopMatrices& cl, const NetworkParams& net,
                                                   const SearchPolicy& policy,
                                                   const std::vector<double>& grid,
                                                   std::size_t preferred, SearchStats& stats) {
  std::vector<std::size_t> order;
  if (preferred < grid.size()) order.push_back(preferred);
  for (std::size_t i = 0; i < grid.size(); ++i)
    if (i != preferred) order.push_back(i);

  const unsigned threads =
      std::max(1u, policy.threads ? policy.threads : std::thread::hardware_concurrency());
  for (std::size_t begin = 0; begin < order.size(); begin += threads) {
    const std::size_t end = std::min(order.size(), begin + threads);
    std::vector<FeasibilityResult> results(end - begin);
    if (threads == 1) {
      results[0] = synthesize_certificate(cl, grid[order[begin]], policy.gamma, net, policy.mode,
                                          policy.solver);
    } else {
      std::vector<std::future<FeasibilityResult>> futs;
      for (std::size_t i = begin; i < end; ++i)
        futs.push_back(std::async(std::launch::async, [&, d = grid[order[i]]] {
          return synthesize_certificate(cl, d, policy.gamma, net, policy.mode, policy.solver);
        }));
      for (std::size_t i = 0; i < futs.size(); ++i) results[i] = futs[i].get();
    }
    for (std::size_t i = 0; i < results.size(); ++i) {
      ++stats.solves;
      stats.solve_time += results[i].solve_time;
      if (results[i].feasible) ++stats.feasible_solves;
    }
    for (std::size_t i = 0; i < results.size(); ++i)
      if (results[i].feasible) return Witness{order[begin + i], *results[i].certificate};
  }
  return std::nullopt;
}

}  // namespace detail

inline std::optional<TradeoffPoint> max_delay_for_delta(const ClosedLoopMatrices& cl, double Ts,
                                                        int Delta, const SearchPolicy& policy) {
  if (Delta < 0) throw ValidationError("Delta must be nonnegative");
  policy.validate(Ts);
  const auto grid = delta_grid(policy, Ts);
  SearchStats stats;
  auto at = [&](double tmad, std::size_t preferred) {
    return detail::first_feasible_delta(cl, NetworkParams{Ts, Delta, tmad}, policy, grid, preferred,
                                        stats);
  };

  auto best = at(0.0, grid.size());
  if (!best) return std::nullopt;
  double lo = 0.0;
  if (auto full = at(Ts, best->grid_index)) {
    best = std::move(full);
    lo = Ts;
  } else {
    double hi = Ts;
    while (hi - lo > policy.tmad_tolerance) {
      const double mid = 0.5 * (lo + hi);
      if (auto w = at(mid, best->grid_index)) {
        best = std::move(w);
        lo = mid;
      } else {
        hi = mid;
      }
    }
  }

  TradeoffPoint pt;
  pt.Delta = Delta;
  pt.tmad_star = lo;
  pt.delta_star = grid[best->grid_index];
  pt.certificate = std::move(best->certificate);
  if (lo > 0.0) {
    const auto half = synthesize_certificate(cl, pt.delta_star, policy.gamma,
                                             NetworkParams{Ts, Delta, 0.5 * lo}, policy.mode,
                                             policy.solver);
    ++stats.solves;
    stats.solve_time += half.solve_time;
    stats.downward_monotone = half.feasible;
  }
  pt.stats = stats;
  return pt;
}

/// Delta = 0, 1, ... until the first Delta without an achievable Tmad, or the cap.
inline std::vector<TradeoffPoint> tradeoff_curve(const ClosedLoopMatrices& cl, double Ts,
                                                 const SearchPolicy& policy) {
  policy.validate(Ts);
  std::vector<TradeoffPoint> curve;
  for (int Delta = 0; Delta <= policy.delta_cap; ++Delta) {
    auto pt = max_delay_for_delta(cl, Ts, Delta, policy);
    if (!pt) break;
    if (!check_certificate(pt->certificate, cl).passed)
      throw std::logic_error("trade-off point at Delta=" + std::to_string(Delta) +
                             " carries a certificate that fails re-verification");
    curve.push_back(std::move(*pt));
  }
  return curve;
}

struct GammaFloorResult {
  double gamma = 0.0;
  double delta = 0.0;
  Certificate certificate;
  int solves = 0;
};

/// Smallest gamma (to `tolerance`, relative to policy.gamma) for which the
/// fixed (Delta, Tmad) admits an input-output certificate on the delta grid.
inline GammaFloorResult gamma_floor(const ClosedLoopMatrices& cl, const NetworkParams& net,
                                    const SearchPolicy& policy, double tolerance = 1e-3) {
  net.validate();
  SearchPolicy p = policy;
  p.mode = StabilityMode::InputOutput;
  p.validate(net.Ts);
  const auto grid = delta_grid(p, net.Ts);
  SearchStats stats;
  auto feasible_at = [&](double gamma, std::size_t preferred) {
    SearchPolicy q = p;
    q.gamma = gamma;
    return detail::first_feasible_delta(cl, net, q, grid, preferred, stats);
  };
  auto best = feasible_at(p.gamma, grid.size());
  if (!best)
    throw ValidationError("(Delta=" + std::to_string(net.Delta) + ", Tmad=" + format_double(net.Tmad) +
                          ") is not certifiable at gamma=" + format_double(p.gamma));
  double lo = 0.0, hi = p.gamma;
  while (hi - lo > tolerance * p.gamma) {
    const double mid = 0.5 * (lo + hi);
    if (auto w = feasible_at(mid, best->grid_index)) {
      best = std::move(w);
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return {hi, grid[best->grid_index], std::move(best->certificate), stats.solves};
}

// ---------------------------------------------------------------------------
// Output

/// Relative margin of the worst M vertex: min_i (-lambda_max(M_i) / ||M_i||_F).
inline double certificate_margin(const Certificate& cert, const ClosedLoopMatrices& cl) {
  const auto rep = check_certificate(cert, cl);
  double m = std::numeric_limits<double>::infinity();
  for (const auto& c : rep.conditions)
    if (c.name.rfind("M(", 0) == 0) m = std::min(m, -c.extreme_eigenvalue / c.scale);
  return m;
}

inline std::string curve_to_csv(const std::vector<TradeoffPoint>& curve, const ClosedLoopMatrices& cl) {
  std::ostringstream os;
  os << "delta,t_mad,delta_rate,gamma,margin\n";
  for (const auto& p : curve) {
    const bool io = p.certificate.mode == StabilityMode::InputOutput;
    os << p.Delta << ',' << format_double(p.tmad_star) << ',' << format_double(p.delta_star) << ','
       << (io ? format_double(p.certificate.params.gamma) : std::string("")) << ','
       << format_double(certificate_margin(p.certificate, cl)) << '\n';
  }
  return os.str();
}

inline json curve_to_json(const std::vector<TradeoffPoint>& curve) {
  json arr = json::array();
  for (const auto& p : curve)
    arr.push_back({{"delta", p.Delta},
                   {"t_mad", p.tmad_star},
                   {"delta_rate", p.delta_star},
                   {"solves", p.stats.solves},
                   {"downward_monotone", p.stats.downward_monotone},
                   {"certificate", certificate_to_json(p.certificate)}});
  return arr;
}

}  // namespace ncsres
