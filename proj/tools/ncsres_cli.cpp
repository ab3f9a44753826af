// ncsres: command-line front end.
//
//   ncsres analyze     --model M --delta 2 --tmad 0.005 [--delta-rate 4] [--mode io --gamma 5]
//   ncsres tradeoff    --model M [--mode both]
//   ncsres simulate    --model M [--certificate C] [--schedule S] [--disturbance W] [--x0 X]
//   ncsres verify      --model M --certificate C [--schedules 100] [--seed 1]
//   ncsres gamma-floor --model M --delta 2 --tmad 0.005
//
// Exit codes: 0 success, 1 usage or input error, 2 analysis negative, 3 internal error.
// Outputs go to --out-dir, else $NCSRES_OUT_DIR, else the working directory;
// each run also writes manifest.json with the resolved configuration.

#include <Eigen/Core>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ncsres/simulator.hpp"
#include "ncsres/tradeoff.hpp"

#ifndef NCSRES_VERSION
#define NCSRES_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using namespace ncsres;

namespace {

enum Exit { kOk = 0, kUsage = 1, kNegative = 2, kInternal = 3 };

struct Common {
  std::string model;
  std::string out_dir;
  std::string mode = "zero-input";
  double gamma = 5.0;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  // SearchPolicy
  double delta_rate_min = SearchPolicy{}.delta_min;
  double delta_rate_max = SearchPolicy{}.delta_max;
  int delta_rate_points = SearchPolicy{}.delta_points;
  double tmad_tolerance = SearchPolicy{}.tmad_tolerance;
  int delta_cap = SearchPolicy{}.delta_cap;
  // lmi::SolverOptions
  int max_iterations = lmi::SolverOptions{}.max_iterations;
  double solver_tolerance = lmi::SolverOptions{}.tolerance;
  std::string backend = "barrier";
};

struct PointArgs {
  int Delta = -1;
  double tmad = -1.0;
  double delta_rate = 0.0;
  double gamma_tolerance = 1e-3;
};

struct SimArgs {
  std::string certificate, schedule, disturbance, x0;
  double horizon = 0.0;
  double step = 0.0;
  int drops = 0;
  int schedules = 100;
};

void add_common(CLI::App* sub, Common& c, bool allow_both) {
  sub->add_option("--model", c.model, "model JSON file")->required()->check(CLI::ExistingFile);
  sub->add_option("--out-dir", c.out_dir, "output directory (default: $NCSRES_OUT_DIR or .)");
  auto modes = allow_both ? std::vector<std::string>{"zero-input", "input-output", "both"}
                          : std::vector<std::string>{"zero-input", "input-output"};
  sub->add_option("--mode", c.mode, "stability notion")->check(CLI::IsMember(modes))->capture_default_str();
  sub->add_option("--gamma", c.gamma, "L2 gain level (input-output mode)")->check(CLI::PositiveNumber)
      ->capture_default_str();
  sub->add_option("--seed", c.seed, "seed for every random choice")->capture_default_str();
  sub->add_option("--threads", c.threads, "worker threads (0 = all cores)")->capture_default_str();
  sub->add_option("--delta-rate-min", c.delta_rate_min, "smallest decay rate on the grid")
      ->check(CLI::PositiveNumber)->capture_default_str();
  sub->add_option("--delta-rate-max", c.delta_rate_max, "largest decay rate on the grid (0 = automatic)")
      ->check(CLI::NonNegativeNumber)->capture_default_str();
  sub->add_option("--delta-rate-points", c.delta_rate_points, "decay-rate grid size")
      ->check(CLI::PositiveNumber)->capture_default_str();
  sub->add_option("--tmad-tolerance", c.tmad_tolerance, "bisection tolerance on Tmad [s]")
      ->check(CLI::PositiveNumber)->capture_default_str();
  sub->add_option("--delta-cap", c.delta_cap, "largest Delta the search tries")
      ->check(CLI::NonNegativeNumber)->capture_default_str();
  sub->add_option("--max-iterations", c.max_iterations, "LMI solver iteration limit")
      ->check(CLI::PositiveNumber)->capture_default_str();
  sub->add_option("--solver-tolerance", c.solver_tolerance, "LMI solver stopping tolerance")
      ->check(CLI::PositiveNumber)->capture_default_str();
  sub->add_option("--backend", c.backend, "LMI backend")
      ->check(CLI::IsMember({"barrier", "alternating-projections"}))->capture_default_str();
}

void add_point(CLI::App* sub, PointArgs& p, bool rate) {
  sub->add_option("--delta", p.Delta, "max consecutive dropouts")->required()->check(CLI::NonNegativeNumber);
  sub->add_option("--tmad", p.tmad, "max allowable delay [s]")->required()->check(CLI::NonNegativeNumber);
  if (rate)
    sub->add_option("--delta-rate", p.delta_rate, "fixed decay rate (default: search the grid)")
        ->check(CLI::PositiveNumber);
}

SearchPolicy make_policy(const Common& c, StabilityMode mode) {
  SearchPolicy p;
  p.delta_min = c.delta_rate_min;
  p.delta_max = c.delta_rate_max;
  p.delta_points = c.delta_rate_points;
  p.tmad_tolerance = c.tmad_tolerance;
  p.delta_cap = c.delta_cap;
  p.mode = mode;
  p.gamma = c.gamma;
  p.threads = c.threads;
  p.solver.max_iterations = c.max_iterations;
  p.solver.tolerance = c.solver_tolerance;
  p.solver.seed = c.seed;
  p.solver.backend = c.backend == "barrier" ? lmi::Backend::Barrier : lmi::Backend::AlternatingProjections;
  return p;
}

fs::path output_dir(const Common& c) {
  fs::path dir = c.out_dir;
  if (dir.empty()) {
    const char* env = std::getenv("NCSRES_OUT_DIR");
    dir = env && *env ? fs::path(env) : fs::current_path();
  }
  fs::create_directories(dir);
  return dir;
}

void write(const fs::path& p, const std::string& text) {
  detail::write_file(p.string(), text);
  std::cerr << "wrote " << p.string() << "\n";
}

std::string versions() {
  return std::string("ncsres ") + NCSRES_VERSION + "; Eigen " + std::to_string(EIGEN_WORLD_VERSION) + "." +
         std::to_string(EIGEN_MAJOR_VERSION) + "." + std::to_string(EIGEN_MINOR_VERSION) + "; nlohmann_json " +
         std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." + std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
         std::to_string(NLOHMANN_JSON_VERSION_PATCH) + "; CLI11 " + CLI11_VERSION;
}

void write_manifest(const fs::path& dir, const CLI::App& app, const std::string& command, const Common& c,
                    const json& extra) {
  json m;
  m["subcommand"] = command;
  m["versions"] = versions();
  m["seed"] = c.seed;
  m["model"] = fs::absolute(c.model).lexically_normal().string();
  json cfg = json::object();
  std::string rerun = "ncsres " + command;
  for (const auto* opt : app.get_subcommand(command)->get_options()) {
    const auto name = opt->get_single_name();
    if (name.empty() || name == "help" || name == "out-dir") continue;
    const auto res = opt->results();
    const std::string value = res.empty() ? opt->get_default_str() : res.front();
    if (value.empty()) continue;
    cfg[name] = value;
    rerun += " --" + name + " " + value;
  }
  m["config"] = cfg;
  m["rerun"] = rerun + " --out-dir " + dir.string();
  for (auto it = extra.begin(); it != extra.end(); ++it) m[it.key()] = it.value();
  write(dir / "manifest.json", m.dump(2) + "\n");
}

StabilityMode mode_of(const std::string& s) {
  return s == "input-output" ? StabilityMode::InputOutput : StabilityMode::ZeroInput;
}

json report_to_json(const CertificateReport& rep) {
  json conds = json::array();
  auto add = [&](const ConditionResult& c) {
    conds.push_back({{"name", c.name},
                     {"extreme_eigenvalue", c.extreme_eigenvalue},
                     {"scale", c.scale},
                     {"margin", c.margin},
                     {"passed", c.passed}});
  };
  for (const auto& c : rep.conditions) add(c);
  json j = {{"passed", rep.passed}, {"conditions", conds}};
  j["early_l0_vertex"] = {{"extreme_eigenvalue", rep.early_l0_vertex.extreme_eigenvalue},
                          {"passed", rep.early_l0_vertex.passed}};
  return j;
}

json bounds_to_json(const CertificateBounds& b) {
  return {{"rho1", b.rho1},       {"rho2", b.rho2},   {"flow_margin", b.flow_margin},
          {"lambda_t", b.lambda_t}, {"kappa", b.kappa}, {"gain_fn_coeff", b.gain_fn_coeff},
          {"l2_alpha", b.l2_alpha}};
}

json metrics_to_json(const SimulationMetrics& m) {
  auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  return {{"eps_mon", num(m.eps_mon)},
          {"max_jump_increase", num(m.max_jump_increase)},
          {"max_flow_residual", num(m.max_flow_residual)},
          {"max_envelope_excess", num(m.max_envelope_excess)},
          {"output_energy", num(m.output_energy)},
          {"input_energy", num(m.input_energy)},
          {"empirical_gain", num(m.empirical_gain)},
          {"decay_rate", num(m.decay_rate)},
          {"overshoot", num(m.overshoot)},
          {"bounds_valid", m.bounds_valid},
          {"jump_violations", m.jump_violations},
          {"flow_violations", m.flow_violations},
          {"envelope_violations", m.envelope_violations},
          {"l2_checked", m.l2_checked},
          {"l2_violation", m.l2_violation}};
}

VectorXd vector_from_json(const json& j, const std::string& where) {
  if (!j.is_array()) throw ParseError(where + " must be an array of numbers");
  VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ParseError(where + "[" + std::to_string(i) + "] is not a number");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

// {"type": "zero"}
// {"type": "sinusoid", "amplitude": [...], "frequency": [...], "phase": [...]}
// {"type": "piecewise", "breakpoints": [t0, t1, ...], "values": [[w at t0], [w at t1], ...]}
DisturbanceSignal load_disturbance(const std::string& path, int n_w) {
  if (path.empty()) return DisturbanceSignal::zero(n_w);
  const json j = detail::parse_text(detail::read_file(path), path);
  const std::string type = j.value("type", "");
  if (type == "zero") return DisturbanceSignal::zero(n_w);
  if (type == "sinusoid")
    return DisturbanceSignal::sinusoid(vector_from_json(j.at("amplitude"), "amplitude"),
                                       vector_from_json(j.at("frequency"), "frequency"),
                                       vector_from_json(j.at("phase"), "phase"));
  if (type == "piecewise") {
    const VectorXd br = vector_from_json(j.at("breakpoints"), "breakpoints");
    const MatrixXd rows = detail::matrix_from_json(j.at("values"), "values");
    return DisturbanceSignal::piecewise_constant(std::vector<double>(br.data(), br.data() + br.size()),
                                                 rows.transpose());
  }
  throw ParseError(path + ": disturbance type must be zero, sinusoid or piecewise");
}

HybridState load_x0(const std::string& path, const ClosedLoopMatrices& cl, const NetworkParams& net) {
  HybridState x = initial_state_at_target(cl, net);
  if (path.empty()) return x;
  const json j = detail::parse_text(detail::read_file(path), path);
  if (j.contains("xtilde")) x.xtilde = vector_from_json(j["xtilde"], "xtilde");
  if (j.contains("eta")) x.eta = vector_from_json(j["eta"], "eta");
  if (j.contains("sigma")) x.sigma = vector_from_json(j["sigma"], "sigma");
  return x;
}

// ---------------------------------------------------------------------------

int run_analyze(const CLI::App& app, const Common& c, const PointArgs& a) {
  const auto model = load_model(c.model);
  const auto cl = model.closed_loop();
  const NetworkParams net{model.network.Ts, a.Delta, a.tmad};
  net.validate();
  const auto mode = mode_of(c.mode);
  const auto policy = make_policy(c, mode);
  policy.validate(net.Ts);
  const auto dir = output_dir(c);

  std::optional<Certificate> cert;
  json attempts = json::array();
  if (a.delta_rate > 0.0) {
    const auto r = synthesize_certificate(cl, a.delta_rate, c.gamma, net, mode, policy.solver);
    attempts.push_back({{"delta_rate", a.delta_rate}, {"feasible", r.feasible}, {"margin", r.margin},
                        {"diagnostics", r.diagnostics}});
    if (r.feasible) cert = *r.certificate;
  } else {
    SearchStats stats;
    const auto grid = delta_grid(policy, net.Ts);
    if (auto w = detail::first_feasible_delta(cl, net, policy, grid, grid.size(), stats)) cert = w->certificate;
    attempts.push_back({{"grid_points", grid.size()}, {"solves", stats.solves}, {"feasible", cert.has_value()}});
  }

  json report = {{"delta", a.Delta}, {"t_mad", a.tmad}, {"mode", c.mode}, {"attempts", attempts}};
  if (cert) {
    report["delta_rate"] = cert->params.delta;
    report["check"] = report_to_json(check_certificate(*cert, cl));
    report["bounds"] = bounds_to_json(compute_bounds(*cert, cl));
    save_certificate(*cert, (dir / "certificate.json").string());
    std::cerr << "wrote " << (dir / "certificate.json").string() << "\n";
  }
  write(dir / "report.json", report.dump(2) + "\n");
  write_manifest(dir, app, "analyze", c, {{"feasible", cert.has_value()}});
  if (!cert) {
    std::cerr << "no certificate for Delta=" << a.Delta << ", Tmad=" << format_double(a.tmad) << " ("
              << c.mode << ")\n";
    return kNegative;
  }
  std::cout << "feasible: delta_rate=" << format_double(cert->params.delta)
            << " margin=" << format_double(certificate_margin(*cert, cl)) << "\n";
  return kOk;
}

int run_tradeoff(const CLI::App& app, const Common& c) {
  const auto model = load_model(c.model);
  const auto cl = model.closed_loop();
  const auto dir = output_dir(c);
  std::vector<std::string> modes =
      c.mode == "both" ? std::vector<std::string>{"zero-input", "input-output"} : std::vector<std::string>{c.mode};
  json summary = json::object();
  bool any_empty = false;
  for (const auto& m : modes) {
    const auto curve = tradeoff_curve(cl, model.network.Ts, make_policy(c, mode_of(m)));
    write(dir / ("tradeoff_" + m + ".csv"), curve_to_csv(curve, cl));
    write(dir / ("tradeoff_" + m + ".json"), curve_to_json(curve).dump(2) + "\n");
    json pts = json::array();
    for (const auto& p : curve) pts.push_back({{"delta", p.Delta}, {"t_mad", p.tmad_star}});
    summary[m] = pts;
    any_empty = any_empty || curve.empty();
    std::cout << m << ":";
    for (const auto& p : curve) std::cout << " (" << p.Delta << ", " << format_double(p.tmad_star) << ")";
    std::cout << "\n";
  }
  write_manifest(dir, app, "tradeoff", c, {{"curves", summary}});
  return any_empty ? kNegative : kOk;
}

int run_simulate(const CLI::App& app, const Common& c, const PointArgs& a, const SimArgs& s) {
  const auto model = load_model(c.model);
  const auto cl = model.closed_loop();
  std::optional<Certificate> cert;
  if (!s.certificate.empty()) cert = load_certificate(s.certificate);
  NetworkParams net = cert ? cert->net : model.network;
  if (a.Delta >= 0) net.Delta = a.Delta;
  if (a.tmad >= 0.0) net.Tmad = a.tmad;
  net.validate();
  const double horizon = s.horizon > 0.0 ? s.horizon : 100 * net.Ts;
  const auto samples = static_cast<std::size_t>(std::ceil(horizon / net.Ts - 1e-9)) + 1;
  const AttackSchedule schedule =
      s.schedule.empty() ? detail::periodic(samples, s.drops, net.Tmad) : load_schedule(s.schedule);
  const auto w = load_disturbance(s.disturbance, cl.n_w());
  const auto x0 = load_x0(s.x0, cl, net);
  const auto dir = output_dir(c);

  const auto traj = simulate(cl, net, schedule, x0, w, {horizon, s.step});
  write(dir / "trajectory.csv", trajectory_to_csv(traj, net, cert ? &*cert : nullptr));
  write(dir / "events.csv", events_to_csv(traj));
  json summary = {{"jumps", traj.jumps()},
                  {"final_time", traj.final_time()},
                  {"two_jump_dwell_time", satisfies_two_jump_dwell_time(traj, net.Ts)}};
  int rc = kOk;
  if (cert) {
    const auto m = monitor_certificate(traj, *cert, cl, w);
    summary["monitor"] = metrics_to_json(m);
    if (!m.passed()) rc = kNegative;
  }
  write(dir / "metrics.json", summary.dump(2) + "\n");
  write_manifest(dir, app, "simulate", c, json::object());
  return rc;
}

int run_verify(const CLI::App& app, const Common& c, const SimArgs& s) {
  const auto model = load_model(c.model);
  const auto cl = model.closed_loop();
  if (s.certificate.empty()) throw ValidationError("verify needs --certificate");
  const auto cert = load_certificate(s.certificate);
  const auto& net = cert.net;
  const double horizon = s.horizon > 0.0 ? s.horizon : 150 * net.Ts;
  const auto samples = static_cast<std::size_t>(std::ceil(horizon / net.Ts - 1e-9)) + 1;
  const std::size_t structured = enumerate_worst_schedules(net, 1).size();
  const std::size_t wanted = static_cast<std::size_t>(s.schedules);
  auto battery = enumerate_worst_schedules(net, samples, wanted > structured ? wanted - structured : 0, c.seed);
  battery.resize(std::min(battery.size(), wanted));
  const auto dir = output_dir(c);

  const auto rep = check_certificate(cert, cl);
  std::mt19937_64 rng(c.seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  auto rand_vec = [&](int n) {
    VectorXd v(n);
    for (int i = 0; i < n; ++i) v(i) = unit(rng);
    return v;
  };
  const auto w = DisturbanceSignal::zero(cl.n_w());
  int violations = 0, failing_runs = 0;
  json runs = json::array();
  for (std::size_t i = 0; i < battery.size(); ++i) {
    const HybridState x0{rand_vec(cl.n_x()), rand_vec(cl.n_y()), rand_vec(cl.n_y()), net.Ts, 0};
    const auto traj = simulate(cl, net, battery[i], x0, w, {horizon});
    const auto m = monitor_certificate(traj, cert, cl, w);
    violations += m.violations();
    if (!m.passed()) {
      ++failing_runs;
      runs.push_back({{"run", i}, {"metrics", metrics_to_json(m)}});
    }
  }
  const bool ok = rep.passed && violations == 0;
  json out = {{"passed", ok},
              {"check", report_to_json(rep)},
              {"schedules", battery.size()},
              {"horizon", horizon},
              {"violations", violations},
              {"failing_runs", runs}};
  write(dir / "verify.json", out.dump(2) + "\n");
  write_manifest(dir, app, "verify", c, {{"passed", ok}});
  std::cout << (ok ? "PASS" : "FAIL") << ": conditions " << (rep.passed ? "hold" : "fail") << ", "
            << battery.size() << " schedules, " << violations << " monitor violations in " << failing_runs
            << " runs\n";
  return ok ? kOk : kNegative;
}

int run_gamma_floor(const CLI::App& app, const Common& c, const PointArgs& a) {
  const auto model = load_model(c.model);
  const auto cl = model.closed_loop();
  const NetworkParams net{model.network.Ts, a.Delta, a.tmad};
  const auto policy = make_policy(c, StabilityMode::InputOutput);
  const auto dir = output_dir(c);
  GammaFloorResult r;
  try {
    r = gamma_floor(cl, net, policy, a.gamma_tolerance);
  } catch (const ValidationError& e) {
    std::cerr << e.what() << "\n";
    write_manifest(dir, app, "gamma-floor", c, {{"feasible", false}});
    return kNegative;
  }
  save_certificate(r.certificate, (dir / "certificate.json").string());
  write(dir / "gamma_floor.json",
        json({{"gamma", r.gamma}, {"delta_rate", r.delta}, {"solves", r.solves}}).dump(2) + "\n");
  write_manifest(dir, app, "gamma-floor", c, {{"feasible", true}});
  std::cout << "gamma_floor=" << format_double(r.gamma) << " delta_rate=" << format_double(r.delta) << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Resilience of networked control loops to dropouts and delays"};
  app.require_subcommand(1);

  Common common;
  PointArgs point;
  SimArgs sim;

  auto* analyze = app.add_subcommand("analyze", "certificate for one (Delta, Tmad)");
  add_common(analyze, common, false);
  add_point(analyze, point, true);

  auto* tradeoff = app.add_subcommand("tradeoff", "Delta versus Tmad curve");
  add_common(tradeoff, common, true);

  auto* simulate_cmd = app.add_subcommand("simulate", "hybrid simulation under one schedule");
  add_common(simulate_cmd, common, false);
  simulate_cmd->add_option("--delta", point.Delta, "override Delta")->check(CLI::NonNegativeNumber);
  simulate_cmd->add_option("--tmad", point.tmad, "override Tmad")->check(CLI::NonNegativeNumber);
  simulate_cmd->add_option("--certificate", sim.certificate, "certificate to monitor")->check(CLI::ExistingFile);
  simulate_cmd->add_option("--schedule", sim.schedule, "attack schedule JSON")->check(CLI::ExistingFile);
  simulate_cmd->add_option("--drops", sim.drops, "periodic schedule: drops before each delivery")
      ->check(CLI::NonNegativeNumber);
  simulate_cmd->add_option("--disturbance", sim.disturbance, "disturbance JSON")->check(CLI::ExistingFile);
  simulate_cmd->add_option("--x0", sim.x0, "initial state JSON")->check(CLI::ExistingFile);
  simulate_cmd->add_option("--horizon", sim.horizon, "simulated time [s] (default 100 Ts)");
  simulate_cmd->add_option("--step", sim.step, "RK4 step [s] (default min(Ts/100, Tmad/4))");

  auto* verify = app.add_subcommand("verify", "check a certificate and monitor it on a schedule battery");
  add_common(verify, common, false);
  verify->add_option("--certificate", sim.certificate, "certificate JSON")->required()->check(CLI::ExistingFile);
  verify->add_option("--schedules", sim.schedules, "battery size")->check(CLI::PositiveNumber)
      ->capture_default_str();
  verify->add_option("--horizon", sim.horizon, "simulated time per run [s] (default 150 Ts)");

  auto* floor = app.add_subcommand("gamma-floor", "smallest certifiable gamma at one (Delta, Tmad)");
  add_common(floor, common, false);
  add_point(floor, point, false);
  floor->add_option("--gamma-tolerance", point.gamma_tolerance, "relative bisection tolerance")
      ->check(CLI::PositiveNumber)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*analyze) return run_analyze(app, common, point);
    if (*tradeoff) return run_tradeoff(app, common);
    if (*simulate_cmd) return run_simulate(app, common, point, sim);
    if (*verify) return run_verify(app, common, sim);
    if (*floor) return run_gamma_floor(app, common, point);
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const DimensionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << "\n";
    return kNegative;
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kInternal;
  }
  return kInternal;
}
