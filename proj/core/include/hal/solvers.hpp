#pragma once

#include "hal/types.hpp"

#include <cstddef>
#include <optional>

namespace hal {

enum class Method { RK4, DormandPrince };

struct SolverConfig {
  Method method = Method::DormandPrince;
  double atol = 1e-6;
  double rtol = 1e-6;
  double event_tol = 1e-4;
  int max_root_iters = 100;
  /// Dormand-Prince: first step (Hairer heuristic when empty). RK4: the fixed step (0.01 when empty).
  std::optional<double> dt_init;
  double safety = 0.9;
  double min_factor = 0.2;
  double max_factor = 10.0;
  /// When set, only samples on this grid (plus pre/post event pairs) are recorded.
  std::optional<double> output_dt;
  double max_events_per_unit_time = 1e4;
  std::size_t max_steps = 50'000'000;

  void validate() const;
};

struct StepStats {
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  std::size_t fevals = 0;
};

/// Classical four-stage Runge-Kutta update.
[[nodiscard]] StateVec step_rk4(const Flow& flow, double t, const StateVec& x, double dt);

struct DopriStep {
  StateVec x_next;  ///< fifth-order solution
  StateVec err;     ///< fifth minus fourth order estimate
  StateVec k_last;  ///< flow at (t + dt, x_next); reusable as the next first stage
};

/// Dormand-Prince 5(4) embedded pair. `k1`, when given, is flow(t, x) (FSAL).
[[nodiscard]] DopriStep step_dopri(const Flow& flow, double t, const StateVec& x, double dt,
                                   const StateVec* k1 = nullptr);

/// max_i |err_i| / (atol + rtol * max(|x_i|, |x_next_i|)).
[[nodiscard]] double error_ratio(const StateVec& x, const StateVec& x_next, const StateVec& err, double atol,
                                 double rtol);

/// dt * clamp(safety * ratio^(-1/(order+1)), min_factor, max_factor).
[[nodiscard]] double adapt_step(double dt, double ratio, double safety, double min_factor, double max_factor,
                                int order);

/// Hairer's starting step heuristic (Solving ODEs I, II.4).
[[nodiscard]] double initial_step_size(const Flow& flow, double t0, const StateVec& x0, const StateVec& f0, int order,
                                       double atol, double rtol);

/// Fixed-step integration from t0 to t1 with step h (last step shortened).
[[nodiscard]] Trajectory integrate_fixed(const Flow& flow, const StateVec& x0, double t0, double t1, double h,
                                         Method method);

/// Integrates over [t0, t1]. Dormand-Prince uses error control (recording only
/// the output grid when one is set), RK4 the fixed step from the config.
[[nodiscard]] Trajectory odeint(const Flow& flow, const StateVec& x0, double t0, double t1, const SolverConfig& config,
                                StepStats* stats = nullptr);

struct EventLocation {
  double t = 0.0;
  StateVec x;
  bool converged = true;  ///< false when max_root_iters ran out before event_tol
  int iterations = 0;
};

/// Bisection on [t_lo, t_hi]: each probe re-integrates one step from
/// (t_lo, x_lo). Requires the sign of `condition` to differ between the two
/// endpoints; returns the right end of the final bracket, where the sign has
/// already changed.
[[nodiscard]] EventLocation locate_event(const Flow& flow, const ScalarField& condition, double t_lo,
                                         const StateVec& x_lo, double t_hi, const StateVec& x_hi,
                                         const SolverConfig& config);

}  // namespace hal
