#include "hal/error.hpp"
#include "hal/event_module.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace {

using namespace hal;
using namespace hal::events;
using recovery::EventSample;

EventSample make_sample(double tau, double w) {
  EventSample s;
  s.tau = tau;
  s.t_start = 0.0;
  s.t_event = tau;
  s.x_start = Eigen::Vector2d(1.0, 0.0);
  s.x_pre = Eigen::Vector2d(w, 1.0);
  s.x_post = Eigen::Vector2d(0.5 * w, 1.0);
  return s;
}

EventSupervision halving_supervision(int n, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  EventSupervision sup;
  for (int i = 0; i < n; ++i) {
    sup[{0, 1}].push_back(make_sample(standard_exponential(rng), 2.0 + 8.0 * uniform01(rng)));
    sup[{1, 0}].push_back(make_sample(3.0 * standard_exponential(rng), 2.0 + 8.0 * uniform01(rng)));
  }
  return sup;
}

EventModuleConfig quick_config() {
  EventModuleConfig c;
  c.iterations = 300;
  c.lr = 1e-2;
  c.jump_hidden = 16;
  return c;
}

TEST(EdgeKey, RoundTrip) {
  EXPECT_EQ(edge_key({2, 7}), "2->7");
  EXPECT_EQ(edge_from_key("2->7"), (Edge{2, 7}));
  EXPECT_THROW((void)edge_from_key("27"), Error);
  EXPECT_THROW((void)edge_from_key("a->b"), Error);
}

TEST(JumpNet, StartsAsIdentity) {
  Rng rng = make_rng(1);
  JumpNet j(2, 8, rng);
  Matrix pre(3, 2), post(3, 2);
  pre << 1, 2, 3, 4, 5, 6;
  post = 0.5 * pre;
  j.fit_scalers(pre, post);
  EXPECT_LT((j.apply(pre) - pre).norm(), 1e-15);
  EXPECT_GT(j.out_scale()(0), 0.0);
}

TEST(EventModule, ConditioningLayout) {
  EventModule m(3, 2, EventModuleConfig{});
  EXPECT_EQ(m.cond_dim(), 9);
  const auto c = m.conditioning({1, 2}, Eigen::Vector2d::Zero(), 0.0);
  EXPECT_EQ(c.sum(), 1.0);
  EXPECT_EQ(c(1 * 3 + 2), 1.0);
  auto cfg = EventModuleConfig{};
  cfg.condition_on_state = true;
  EXPECT_EQ(EventModule(3, 2, cfg).cond_dim(), 12);
}

TEST(EventModule, TrainingLearnsJumpsAndRates) {
  const auto train = halving_supervision(200, 2);
  const auto test = halving_supervision(200, 3);
  EventModule m(2, 2, quick_config());
  const auto fit = train_event_module(m, train);
  EXPECT_EQ(m.edges().size(), 2u);
  EXPECT_EQ(fit.n_nll, 400);
  const auto ev = evaluate_event_module(m, test);
  EXPECT_LT(ev.pooled_jump_mse, 0.05);
  // Entropies of Exp(1) and Exp(1/3) are 1 and 1 + ln 3.
  EXPECT_NEAR(ev.edges.at({0, 1}).nll, 1.0, 0.15);
  EXPECT_NEAR(ev.edges.at({1, 0}).nll, 1.0 + std::log(3.0), 0.15);
  Rng rng = make_rng(4);
  double mean = 0.0;
  const int n = 4000;
  for (int i = 0; i < n; ++i) mean += m.sample_tau({1, 0}, Eigen::Vector2d::Zero(), 0.0, rng);
  EXPECT_NEAR(mean / n, 3.0, 0.3);
}

TEST(EventModule, UnknownEdgesUseIdentityJump) {
  EventModule m(3, 2, quick_config());
  EventSupervision test;
  test[{2, 0}].push_back(make_sample(1.0, 4.0));
  const auto ev = evaluate_event_module(m, test);
  EXPECT_EQ(ev.n_nll, 0);
  EXPECT_EQ(ev.n_jump, 1);
  EXPECT_NEAR(ev.pooled_jump_mse, 2.0, 1e-12);
  EXPECT_TRUE(std::isnan(ev.edges.at({2, 0}).nll));
}

TEST(EventModule, EmptySupervisionThrows) {
  EventModule m(2, 2, quick_config());
  try {
    (void)train_event_module(m, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoSupervision);
  }
}

TEST(EventModule, NextEventPicksEarliest) {
  EventModule m(3, 2, quick_config());
  Rng rng = make_rng(5);
  m.add_edge({0, 1}, rng);
  m.add_edge({0, 2}, rng);
  m.flow({0, 2}).set_affine(std::log(100.0), std::log(0.01));
  const auto ev = sample_next_event(m, 0, 2.0, Eigen::Vector2d::Zero(), rng);
  EXPECT_EQ(ev.target, 1);
  EXPECT_NEAR(ev.time, 2.0 + ev.tau, 1e-15);
  try {
    (void)sample_next_event(m, 2, 0.0, Eigen::Vector2d::Zero(), rng);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoOutgoingEdges);
  }
}

TEST(EventModule, JsonRoundTrip) {
  auto cfg = quick_config();
  cfg.condition_on_state = true;
  cfg.iterations = 20;
  EventModule m(2, 2, cfg);
  (void)train_event_module(m, halving_supervision(20, 6));
  const auto back = module_from_json(module_to_json(m));
  EXPECT_EQ(module_to_json(back), module_to_json(m));
  const Eigen::Vector2d x(3.0, 1.0);
  EXPECT_EQ(back.log_density({0, 1}, 0.7, x, 1.0), m.log_density({0, 1}, 0.7, x, 1.0));
  EXPECT_EQ(back.apply_jump({1, 0}, x), m.apply_jump({1, 0}, x));
  EXPECT_THROW((void)module_from_json("{}"), Error);
}

TEST(Simulation, FollowsLearnedEvents) {
  recovery::ModelConfig mc;
  mc.n_modes = 2;
  recovery::NhaRecoveryModel model(mc, 2, 1);
  model.state_scaler = recovery::Standardizer::identity(2);
  for (auto& f : model.fields()) {
    for (auto& p : f.params()) p.value.setZero();
  }
  model.fields()[0].bias(0).value << 1.0, 0.0;
  EventModule m(2, 2, quick_config());
  Rng rng = make_rng(7);
  m.add_edge({0, 1}, rng);
  m.add_edge({1, 0}, rng);
  m.flow({0, 1}).set_affine(std::log(0.5), std::log(0.05));
  m.flow({1, 0}).set_affine(std::log(0.5), std::log(0.05));
  const auto sol = simulate_nha(model, m, Eigen::Vector2d::Zero(), 0, 0.0, 10.0, rng, NhaSimConfig{0.05});
  EXPECT_GT(sol.events.size(), 15u);
  EXPECT_LT(sol.events.size(), 25u);
  for (std::size_t i = 1; i < sol.events.size(); ++i) EXPECT_NE(sol.events[i].source.index, sol.events[i - 1].source.index);
  EXPECT_NEAR(sol.trajectory.times.back(), 10.0, 1e-12);
  // x1 only grows in mode 0, which holds about half of the time.
  EXPECT_NEAR(sol.trajectory.states.back()(0), 5.0, 1.0);
  const auto stats = dwell_statistics({sol.trajectory});
  EXPECT_NEAR(stats.mean_dwell.at(0), 0.5, 0.1);
  EXPECT_GT(stats.edge_count.at({0, 1}), 5);
}

TEST(Simulation, NoOutgoingEdgesRunsToHorizon) {
  recovery::ModelConfig mc;
  mc.n_modes = 2;
  recovery::NhaRecoveryModel model(mc, 2, 1);
  model.state_scaler = recovery::Standardizer::identity(2);
  EventModule m(2, 2, quick_config());
  Rng rng = make_rng(8);
  const auto sol = simulate_nha(model, m, Eigen::Vector2d::Zero(), 1, 0.0, 1.0, rng);
  EXPECT_TRUE(sol.events.empty());
  EXPECT_NEAR(sol.trajectory.times.back(), 1.0, 1e-12);
  ASSERT_EQ(sol.mode_timeline.size(), 1u);
  EXPECT_EQ(sol.mode_timeline[0].mode.index, 1);
}

TEST(Dwell, IgnoresTruncatedInterval) {
  Trajectory t;
  t.times = {0, 1, 1, 3, 3, 4};
  t.states.assign(6, StateVec::Zero(1));
  t.modes = std::vector<ModeId>{ModeId{0}, ModeId{0}, ModeId{1}, ModeId{1}, ModeId{0}, ModeId{0}};
  t.event_times = std::vector<double>{1, 3};
  const auto s = dwell_statistics({t});
  EXPECT_DOUBLE_EQ(s.mean_dwell.at(0), 1.0);
  EXPECT_DOUBLE_EQ(s.mean_dwell.at(1), 2.0);
  EXPECT_EQ(s.dwell_count.at(0), 1);
  EXPECT_EQ(s.edge_count.at({0, 1}), 1);
  EXPECT_EQ(s.edge_count.at({1, 0}), 1);
}

}  // namespace
