#pragma once

#include "hal/solvers.hpp"
#include "hal/types.hpp"

#include <cstdint>
#include <vector>

namespace hal {

/// Running intensity integral and Exponential(1) budget of one stochastic spec.
struct StochasticEventState {
  double accumulated = 0.0;
  double budget = 1.0;
};

struct EventRecord {
  double time = 0.0;
  ModeId source;
  ModeId target;
  std::size_t spec_index = 0;
};

struct ModeInterval {
  double begin = 0.0;
  double end = 0.0;
  ModeId mode;
};

struct HybridSolution {
  Trajectory trajectory;  ///< pre/post jump samples share a timestamp; modes and event_times filled
  std::vector<EventRecord> events;
  std::vector<ModeInterval> mode_timeline;
  StepStats step_stats;
};

/// Event-driven integration of a hybrid system.
///
/// Every step that passes error control is checked against the events leaving
/// the current mode. When at least one event state flips from false to true
/// inside the step, the earliest crossing is bracketed by bisection to
/// `event_tol`; if several specs have fired at the bracket end the one with the
/// smallest index wins. The pre-jump sample, the jump, and the post-jump sample
/// are recorded at the same time stamp and integration restarts with a fresh
/// starting step.
///
/// Stochastic specs integrate their intensity as extra state components while
/// their source mode is active and fire when the integral reaches an
/// Exponential(1) budget; the budget is redrawn and the integral reset after
/// each firing of that spec.
[[nodiscard]] HybridSolution odeint_hybrid(const HybridSystemDef& system, const StateVec& x0, ModeId z0, double t0,
                                           double t1, const SolverConfig& config, std::uint64_t rng_seed);

/// Converts a solution into the dataset representation.
[[nodiscard]] Trajectory to_trajectory(const HybridSolution& solution, const std::string& id);

}  // namespace hal
