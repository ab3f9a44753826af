#include <gtest/gtest.h>

#include "ncsres/simulator.hpp"
#include "support/certify.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace ncsres;
using fixtures::Gen;

namespace {

AttackSchedule loss_free(std::size_t n, double delay) {
  AttackSchedule s;
  for (std::size_t k = 0; k < n; ++k) s.entries.push_back(ScheduleEntry::deliver(delay));
  return s;
}

const Certificate& reactor_cert(StabilityMode mode) {
  static const auto cl = fixtures::batch_reactor().closed_loop();
  static const Certificate zi =
      *fixtures::find_certificate(cl, NetworkParams{0.01, 2, 0.005}, StabilityMode::ZeroInput);
  static const Certificate io =
      *fixtures::find_certificate(cl, NetworkParams{0.01, 1, 0.005}, StabilityMode::InputOutput);
  return mode == StabilityMode::ZeroInput ? zi : io;
}

HybridState reactor_x0() {
  HybridState x0 = HybridState::zero(6, 2, 0.01, 0);
  x0.xtilde << 1, -1, 0.5, 2, 0, 1;
  x0.eta << 0.3, 0;
  x0.sigma << 0, -0.2;
  return x0;
}

}  // namespace

TEST(Simulate, TargetSetIsInvariantWithoutDisturbance) {
  const auto cl = fixtures::batch_reactor().closed_loop();
  const NetworkParams net{0.01, 2, 0.004};
  for (const auto& sched : enumerate_worst_schedules(net, 60, 3, 1)) {
    const auto tr = simulate(cl, net, sched, initial_state_at_target(cl, net), DisturbanceSignal::zero(2), {0.5});
    for (const auto& s : tr.samples) {
      EXPECT_EQ(s.state.norm(), 0.0);
      EXPECT_EQ(distance_to_target(s.state, TargetSet{net.Delta, net.Ts}), 0.0);
    }
  }
}

TEST(Simulate, MatchesMatrixExponentialOnScalarFixture) {
  const auto m = fixtures::scalar();
  const auto cl = m.closed_loop();
  const NetworkParams net{m.network.Ts, 0, 0.0};
  HybridState x0 = HybridState::zero(2, 1, net.Ts, 0);
  x0.xtilde << 1.0, -0.5;
  const auto tr = simulate(cl, net, loss_free(20, 0.0), x0, DisturbanceSignal::zero(1), {1.0});
  EXPECT_DOUBLE_EQ(tr.final_time(), 1.0);
  const VectorXd ref = oracles::loss_free_xtilde(cl, x0.xtilde, net.Ts, 1.0);
  EXPECT_LT((tr.samples.back().state.xtilde - ref).norm(), 1e-6 * ref.norm());
}

TEST(Simulate, AgreesWithOriginalCoordinates) {
  const auto m = fixtures::batch_reactor();
  const auto cl = m.closed_loop();
  const NetworkParams net{0.01, 2, 0.006};
  Gen g(61);
  const auto w = DisturbanceSignal::sinusoid((VectorXd(2) << 0.4, 0.1).finished(), (VectorXd(2) << 5, 11).finished(),
                                             (VectorXd(2) << 0, 0.5).finished());
  for (const auto& sched : enumerate_worst_schedules(net, 40, 5, 2)) {
    HybridState x0{g.vector(6), g.vector(2), g.vector(2), net.Ts, 0};
    for (double horizon : {0.137, 0.35}) {
      const auto tr = simulate(cl, net, sched, x0, w, {horizon});
      const VectorXd y0 = m.plant.C * x0.xtilde.head(4);
      oracles::OriginalState xi{x0.xtilde.head(4), x0.xtilde.tail(2), x0.eta + y0, x0.sigma + y0};
      xi = oracles::simulate_original(m.plant, m.controller, net, sched, xi,
                                      [&](double t) -> VectorXd { return w(t); }, horizon, net.Ts / 100);
      const auto& s = tr.samples.back().state;
      const VectorXd y = m.plant.C * xi.xp;
      const double scale = 1.0 + s.norm();
      EXPECT_LT((s.xtilde.head(4) - xi.xp).norm(), 1e-8 * scale);
      EXPECT_LT((s.xtilde.tail(2) - xi.xc).norm(), 1e-8 * scale);
      EXPECT_LT((s.eta - (xi.yhat - y)).norm(), 1e-8 * scale);
      EXPECT_LT((s.sigma - (xi.sy - y)).norm(), 1e-8 * scale);
    }
  }
}

TEST(Simulate, EventSemantics) {
  const auto cl = fixtures::batch_reactor().closed_loop();
  const NetworkParams net{0.01, 2, 0.004};
  AttackSchedule s;
  s.entries = {ScheduleEntry::deliver(0.004), ScheduleEntry::drop(), ScheduleEntry::drop(),
               ScheduleEntry::deliver(0.0), ScheduleEntry::deliver(0.002)};
  const auto tr = simulate(cl, net, s, reactor_x0(), DisturbanceSignal::zero(2), {0.05});
  ASSERT_EQ(tr.events.size(), 6u);
  const EventKind S = EventKind::Sample, U = EventKind::Update;
  const std::vector<std::pair<EventKind, std::size_t>> want = {{S, 0}, {U, 0}, {S, 3}, {U, 3}, {S, 4}, {U, 4}};
  for (std::size_t i = 0; i < want.size(); ++i) {
    EXPECT_EQ(tr.events[i].kind, want[i].first);
    EXPECT_EQ(tr.events[i].k, want[i].second);
  }
  EXPECT_NEAR(tr.events[1].t, 0.004, 1e-15);
  EXPECT_NEAR(tr.events[2].t, 0.03, 1e-15);
  // Right after each update, eta equals the pre-jump sigma exactly.
  for (std::size_t i = 1; i < tr.samples.size(); ++i) {
    const auto& prev = tr.samples[i - 1].state;
    const auto& cur = tr.samples[i].state;
    EXPECT_GE(tr.samples[i].t, tr.samples[i - 1].t);
    EXPECT_GE(tr.samples[i].j, tr.samples[i - 1].j);
    if (tr.samples[i].j == tr.samples[i - 1].j + 1 && prev.l == 1) EXPECT_EQ(cur.eta, prev.sigma);
  }
  EXPECT_EQ(tr.jumps(), 6);
}

TEST(Simulate, UpdateOnTheNextSamplingInstantComesFirst) {
  const auto cl = fixtures::batch_reactor().closed_loop();
  const NetworkParams net{0.01, 0, 0.01};
  const auto tr = simulate(cl, net, loss_free(5, 0.01), reactor_x0(), DisturbanceSignal::zero(2), {0.045});
  for (std::size_t i = 0; i < tr.events.size(); ++i)
    EXPECT_EQ(tr.events[i].kind, i % 2 == 0 ? EventKind::Sample : EventKind::Update);
}

TEST(Simulate, DwellTime) {
  const auto cl = fixtures::batch_reactor().closed_loop();
  const NetworkParams net{0.01, 2, 0.004};
  for (const auto& sched : enumerate_worst_schedules(net, 100, 10, 3)) {
    const auto tr = simulate(cl, net, sched, reactor_x0(), DisturbanceSignal::zero(2), {1.0});
    EXPECT_TRUE(satisfies_two_jump_dwell_time(tr, net.Ts));
  }
  // The literal t/Ts + 3 bound does not survive two jumps per period.
  const auto tr = simulate(cl, net, loss_free(100, 0.0), reactor_x0(), DisturbanceSignal::zero(2), {0.1});
  EXPECT_FALSE(satisfies_dwell_time(tr, net.Ts));
}

TEST(Simulate, InputValidation) {
  const auto cl = fixtures::batch_reactor().closed_loop();
  const NetworkParams net{0.01, 1, 0.004};
  const auto w = DisturbanceSignal::zero(2);
  const auto sched = loss_free(100, 0.001);
  EXPECT_THROW(simulate(cl, net, sched, reactor_x0(), w, {0.5, 0.002}), ValidationError);
  EXPECT_THROW(simulate(cl, net, loss_free(10, 0.0), reactor_x0(), w, {0.5}), ValidationError);
  AttackSchedule bad = sched;
  bad.entries[3] = bad.entries[4] = ScheduleEntry::drop();
  EXPECT_THROW(simulate(cl, net, bad, reactor_x0(), w, {0.5}), ValidationError);
  HybridState x1 = reactor_x0();
  x1.l = 1;
  x1.tau = 0.0;
  EXPECT_THROW(simulate(cl, net, sched, x1, w, {0.5}), ValidationError);
  EXPECT_THROW(simulate(cl, net, sched, reactor_x0(), DisturbanceSignal::zero(3), {0.5}), DimensionError);
}

TEST(Simulate, DivergenceGuard) {
  auto m = fixtures::scalar();
  m.plant.A(0, 0) = 8.0;
  m.controller.C(0, 0) = 0.0;
  const auto cl = m.closed_loop();
  const NetworkParams net{0.1, 0, 0.0};
  HybridState x0 = HybridState::zero(2, 1, net.Ts, 0);
  x0.xtilde(0) = 1.0;
  EXPECT_THROW(simulate(cl, net, loss_free(100, 0.0), x0, DisturbanceSignal::zero(1), {9.0}), DivergenceError);
}

TEST(Monitor, CertifiedReactorUnderWorstSchedules) {
  const auto cl = fixtures::batch_reactor().closed_loop();
  const auto& cert = reactor_cert(StabilityMode::ZeroInput);
  const auto w = DisturbanceSignal::zero(2);
  for (const auto& sched : enumerate_worst_schedules(cert.net, 150, 10, 4)) {
    const auto tr = simulate(cl, cert.net, sched, reactor_x0(), w, {1.5});
    const auto m = monitor_certificate(tr, cert, cl, w);
    EXPECT_TRUE(m.bounds_valid);
    EXPECT_EQ(m.violations(), 0) << "jump " << m.max_jump_increase << " flow " << m.max_flow_residual
                                 << " envelope " << m.max_envelope_excess;
    const TargetSet A{cert.net.Delta, cert.net.Ts};
    EXPECT_LT(distance_to_target(tr.samples.back().state, A), 0.5 * distance_to_target(tr.samples.front().state, A));
  }
}

TEST(Monitor, CorruptedCertificateIsCaught) {
  const auto cl = fixtures::batch_reactor().closed_loop();
  Certificate bad = reactor_cert(StabilityMode::ZeroInput);
  bad.params.P2_1 *= 10.0;
  const auto w = DisturbanceSignal::zero(2);
  int jump_violations = 0;
  for (const auto& sched : enumerate_worst_schedules(bad.net, 100, 5, 5)) {
    const auto tr = simulate(cl, bad.net, sched, reactor_x0(), w, {0.5});
    jump_violations += monitor_certificate(tr, bad, cl, w).jump_violations;
  }
  EXPECT_GT(jump_violations, 0);
}

TEST(Monitor, BoundedDisturbanceStaysUnderGainFunction) {
  const auto cl = fixtures::batch_reactor().closed_loop();
  const auto& cert = reactor_cert(StabilityMode::InputOutput);
  const auto w = DisturbanceSignal::sinusoid((VectorXd(2) << 1.0, 0.0).finished(), (VectorXd(2) << 3, 3).finished(),
                                             VectorXd::Zero(2));
  EXPECT_DOUBLE_EQ(w.sup_norm(), 1.0);
  for (const auto& sched : enumerate_worst_schedules(cert.net, 100, 3, 6)) {
    const auto tr = simulate(cl, cert.net, sched, initial_state_at_target(cl, cert.net), w, {1.0});
    const auto m = monitor_certificate(tr, cert, cl, w);
    EXPECT_EQ(m.violations(), 0);
    EXPECT_LE(m.max_envelope_excess, 0.0);
    EXPECT_TRUE(m.l2_checked);
  }
}

TEST(EmpiricalGain, HomogeneousInDisturbance) {
  const auto cl = fixtures::batch_reactor().closed_loop();
  const auto& cert = reactor_cert(StabilityMode::InputOutput);
  const auto scheds = enumerate_worst_schedules(cert.net, 100, 2, 7);
  std::vector<L2Run> runs, doubled;
  for (std::size_t i = 0; i < scheds.size(); ++i) {
    MatrixXd v(2, 3);
    v << 1, -0.5, 0.2, 0.3, 0.8, -1;
    const auto w = DisturbanceSignal::piecewise_constant({0.0, 0.13, 0.4}, v * (1.0 + 0.1 * static_cast<double>(i)));
    runs.push_back({scheds[i], w});
    doubled.push_back({scheds[i], w.scaled(2.0)});
  }
  const auto a = empirical_l2_gain(cl, cert, runs, {1.0}, 1);
  const auto b = empirical_l2_gain(cl, cert, doubled, {1.0}, 2);
  ASSERT_EQ(a.gains.size(), b.gains.size());
  for (std::size_t i = 0; i < a.gains.size(); ++i) EXPECT_NEAR(a.gains[i], b.gains[i], 1e-12 * a.gains[i]);
  EXPECT_TRUE(a.passed());
}

TEST(EmpiricalGain, ZeroDisturbanceIsRejected) {
  const auto cl = fixtures::batch_reactor().closed_loop();
  const auto& cert = reactor_cert(StabilityMode::InputOutput);
  std::vector<L2Run> runs = {{enumerate_worst_schedules(cert.net, 50).front(), DisturbanceSignal::zero(2)}};
  EXPECT_THROW(empirical_l2_gain(cl, cert, runs, {0.3}, 1), ValidationError);
}

TEST(Disturbance, PiecewiseConstantAndValidation) {
  MatrixXd v(1, 2);
  v << 2, -3;
  const auto w = DisturbanceSignal::piecewise_constant({0.1, 0.5}, v);
  EXPECT_EQ(w(0.0)(0), 0.0);
  EXPECT_EQ(w(0.1)(0), 2.0);
  EXPECT_EQ(w(0.7)(0), -3.0);
  EXPECT_DOUBLE_EQ(w.sup_norm(), 3.0);
  EXPECT_THROW(DisturbanceSignal::piecewise_constant({0.5, 0.1}, v), ValidationError);
}

TEST(Csv, TrajectoryAndEventColumns) {
  const auto cl = fixtures::batch_reactor().closed_loop();
  const auto& cert = reactor_cert(StabilityMode::ZeroInput);
  const auto tr = simulate(cl, cert.net, loss_free(10, 0.002), reactor_x0(), DisturbanceSignal::zero(2), {0.05});
  const auto csv = trajectory_to_csv(tr, cert.net, &cert);
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "t,j,l,tau,xtilde0,xtilde1,xtilde2,xtilde3,xtilde4,xtilde5,eta0,eta1,sigma0,sigma1,V,dist_A");
  EXPECT_EQ(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')), tr.samples.size() + 1);
  const auto ev = events_to_csv(tr);
  EXPECT_EQ(ev.substr(0, ev.find('\n')), "t,j,kind,k");
  EXPECT_NE(ev.find(",update,"), std::string::npos);
}
