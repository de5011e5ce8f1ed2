#include "hal/error.hpp"
#include "hal/hybrid_solver.hpp"
#include "hal/random.hpp"
#include "hal/reference_systems.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

namespace {

using namespace hal;
using namespace hal::systems;

ToyParams random_params(Rng& rng) {
  ToyParams p;
  p.a = 2.0 * uniform01(rng) - 1.0;
  p.b = 2.0 * uniform01(rng) - 1.0;
  p.c = 0.2 + uniform01(rng);
  p.tau = 0.2 + 0.6 * uniform01(rng);
  return p;
}

double fd(const ToyParams& p, double x0, double t, double ToyParams::*field) {
  const double h = 1e-6;
  ToyParams up = p, down = p;
  up.*field += h;
  down.*field -= h;
  return (toy_solution(up, x0, t) - toy_solution(down, x0, t)) / (2 * h);
}

void expect_rel(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  if (scale <= 1e-8) return;
  EXPECT_LT(std::abs(analytic - numeric) / scale, 1e-5) << analytic << " vs " << numeric;
}

TEST(Toy, GradientsMatchFiniteDifferences) {
  Rng rng = make_rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const auto p = random_params(rng);
    const double x0 = 0.5 + uniform01(rng);
    for (double t : {0.1, 0.95, p.tau - 0.05, p.tau + 0.05}) {
      if (std::abs(t - p.tau) < 1e-3) continue;
      const auto g = toy_gradients(p, x0, t);
      expect_rel(g.da, fd(p, x0, t, &ToyParams::a));
      expect_rel(g.db, fd(p, x0, t, &ToyParams::b));
      expect_rel(g.dc, fd(p, x0, t, &ToyParams::c));
      expect_rel(g.dtau, fd(p, x0, t, &ToyParams::tau));
    }
  }
}

TEST(Toy, GradientUndefinedAtEvent) {
  try {
    (void)toy_gradients({}, 1.0, 0.5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::AtEventTime);
  }
}

TEST(Toy, ClosedFormContinuity) {
  const ToyParams p;
  EXPECT_NEAR(toy_solution(p, 2.0, 0.5 - 1e-12), 2.0 * std::exp(0.5), 1e-9);
  EXPECT_NEAR(toy_solution(p, 2.0, 0.5), 2.0 * 0.5 * std::exp(0.5), 1e-12);
}

TEST(Pathology, FlagsFollowCaseAnalysis) {
  const ToyParams p;
  std::vector<double> ts;
  for (int i = 1; i < 20; ++i) ts.push_back(i / 20.0 + 0.01);
  const auto late = pathology_report(p, 0.8, ts);
  for (const auto& s : late.samples) {
    const bool between = s.t > 0.5 && s.t < 0.8;
    EXPECT_EQ(s.flag == PathologyFlag::WronglyZero, between);
    if (between) {
      EXPECT_EQ(s.grad_b_estimated, 0.0);
      EXPECT_NE(s.grad_b_true, 0.0);
    }
  }
  EXPECT_EQ(late.wrongly_nonzero, 0);
  EXPECT_EQ(late.wrongly_zero, 6);
  const auto early = pathology_report(p, 0.2, ts);
  for (const auto& s : early.samples) {
    const bool between = s.t > 0.2 && s.t < 0.5;
    EXPECT_EQ(s.flag == PathologyFlag::WronglyNonzero, between);
    if (between) {
      EXPECT_EQ(s.grad_b_true, 0.0);
      EXPECT_NE(s.grad_b_estimated, 0.0);
    }
  }
  EXPECT_EQ(early.wrongly_zero, 0);
  EXPECT_EQ(pathology_report(p, 0.5 + 1e-9, ts).wrongly_zero, 0);
  EXPECT_THROW((void)pathology_report(p, 0.3, {1.5}), Error);
}

TEST(Sls, FieldFollowsRegion) {
  Rng rng = make_rng(2);
  for (int i = 0; i < 200; ++i) {
    const Eigen::Vector2d x(-2.0 + 6.0 * uniform01(rng), -3.0 + 6.0 * uniform01(rng));
    const auto z = sls_region(x);
    EXPECT_EQ(z.index, x(0) >= 2.0 ? 0 : (x(1) >= 0.0 ? 1 : 2));
    EXPECT_EQ(sls_field(x), sls_mode_field(z.index, x));
  }
  EXPECT_EQ(sls_mode_field(0, Eigen::Vector2d(3.0, 1.0)), Eigen::Vector2d(-1.0, 5.0));
  EXPECT_EQ(sls_mode_field(1, Eigen::Vector2d(0.0, 1.0)), Eigen::Vector2d(-1.0, -1.0));
  EXPECT_EQ(sls_mode_field(2, Eigen::Vector2d(0.0, -1.0)), Eigen::Vector2d(1.0, -1.0));
}

TEST(Sls, SimulationStaysConsistentWithRegions) {
  const auto sys = make_sls();
  SolverConfig cfg;
  cfg.output_dt = 0.05;
  const auto sol = odeint_hybrid(sys, Eigen::Vector2d(3.0, 1.0), ModeId{0}, 0.0, 10.0, cfg, 0);
  const auto& tr = sol.trajectory;
  int mismatched = 0;
  for (std::size_t i = 0; i < tr.size(); ++i) {
    const Eigen::Vector2d x = tr.states[i];
    if (sls_region(x).index != (*tr.modes)[i].index) ++mismatched;
  }
  // Only samples taken within event_tol of a boundary may disagree.
  EXPECT_LE(mismatched, static_cast<int>(2 * sol.events.size()));
  EXPECT_GT(sol.events.size(), 0u);
}

TEST(Tcp, StructureAndValidation) {
  const auto sys = make_tcp_reno();
  EXPECT_EQ(sys.n_modes, 3);
  EXPECT_EQ(sys.state_dim, 2);
  ASSERT_EQ(sys.events.size(), 5u);
  for (const auto& e : sys.events) EXPECT_TRUE(e.is_stochastic());
  EXPECT_EQ(sys.events[4].source.index, kTcpTimeout);
  EXPECT_EQ(sys.events[4].target.index, kTcpSlowStart);
  const StateVec x = tcp_initial_state();
  StateVec w(2);
  w << 8.0, 3.0;
  EXPECT_NEAR(sys.events[0].jump(0.0, w)(0), 4.0, 1e-15);
  EXPECT_NEAR(sys.events[1].jump(0.0, w)(0), 1.0, 1e-15);
  EXPECT_NEAR(sys.flows[kTcpSlowStart](0.0, w)(0), 8.0 * std::numbers::ln2, 1e-12);
  EXPECT_NEAR(sys.flows[kTcpCongestionAvoidance](0.0, w)(0), 0.5, 1e-15);
  EXPECT_EQ(sys.flows[kTcpTimeout](0.0, w), StateVec::Zero(2));
  EXPECT_EQ(x.size(), 2);
  TcpParams bad;
  bad.tau_off = -1.0;
  EXPECT_THROW(bad.validate(), Error);
}

TEST(DiffDrive, DrivesCircle) {
  const auto sys = make_diff_drive_system(1.0, 1.0);
  SolverConfig cfg;
  cfg.atol = cfg.rtol = 1e-10;
  const double T = 2.0 * std::numbers::pi;
  const auto sol = odeint_hybrid(sys, StateVec::Zero(3), ModeId{0}, 0.0, T, cfg, 0);
  const auto& x = sol.trajectory.states.back();
  EXPECT_NEAR(x(0), 0.0, 1e-7);
  EXPECT_NEAR(x(1), 0.0, 1e-7);
  EXPECT_NEAR(x(2), T, 1e-7);
}

TEST(Systems, LookupByName) {
  for (const auto& n : system_names()) EXPECT_NO_THROW((void)system_by_name(n));
  EXPECT_THROW((void)system_by_name("pendulum"), Error);
}

}  // namespace
