#pragma once

#include "hal/types.hpp"

#include <Eigen/Core>

#include <functional>
#include <string>
#include <vector>

namespace hal::systems {

// ---------------------------------------------------------------------------
// TCP Reno-style congestion control surrogate.
//
// State (w, r): congestion window and cumulative throughput. Modes:
//   0 = slow start     w' = eta * w * ln 2,  r' = kappa * w
//   1 = cong. avoid.   w' = eta / n_ack,     r' = kappa * w
//   2 = timeout        w' = 0,               r' = 0
// Five stochastic edges, in spec order:
//   0: ss -> ca   rate p_drop * kappa * w      jump w <- w / 2
//   1: ss -> off  rate p_drop * kappa * w / 4  jump w <- 1
//   2: ca -> ca   rate p_drop * kappa * w      jump w <- w / 2
//   3: ca -> off  rate p_drop * kappa * w / 4  jump w <- 1
//   4: off -> ss  rate 1 / tau_off             jump w <- 1
// ---------------------------------------------------------------------------

struct TcpParams {
  double tau_off = 3.0;
  double eta = 1.0;
  int n_ack = 2;
  double p_drop = 0.05;
  double kappa = 4.0;

  void validate() const;
};

inline constexpr int kTcpSlowStart = 0;
inline constexpr int kTcpCongestionAvoidance = 1;
inline constexpr int kTcpTimeout = 2;

[[nodiscard]] HybridSystemDef make_tcp_reno(const TcpParams& params = {});
[[nodiscard]] StateVec tcp_initial_state();

// ---------------------------------------------------------------------------
// Switching linear system on the plane with three regions:
//   mode 0: x >= 2            (x', y') = (-y, x + 2)
//   mode 1: x < 2 and y >= 0  (x', y') = (-1, -1)
//   mode 2: x < 2 and y < 0   (x', y') = ( 1, -1)
// Region-boundary crossings are deterministic events with identity jumps.
// ---------------------------------------------------------------------------

[[nodiscard]] HybridSystemDef make_sls();
[[nodiscard]] Eigen::Vector2d sls_field(const Eigen::Vector2d& p);
[[nodiscard]] ModeId sls_region(const Eigen::Vector2d& p);
[[nodiscard]] Eigen::Vector2d sls_mode_field(int mode, const Eigen::Vector2d& p);

// ---------------------------------------------------------------------------
// One-dimensional two-mode toy with a timed jump at tau:
//   x' = a x (t < tau),  x' = b x (t >= tau),  x(tau+) = c x(tau-).
// ---------------------------------------------------------------------------

struct ToyParams {
  double a = 1.0;
  double b = -1.0;
  double c = 0.5;
  double tau = 0.5;

  void validate() const;
};

[[nodiscard]] HybridSystemDef make_toy(const ToyParams& params = {});

/// Closed form: e^{a t} x0 before tau, c e^{a tau + b (t - tau)} x0 from tau on.
[[nodiscard]] double toy_solution(const ToyParams& params, double x0, double t);

struct ToyGradients {
  double da = 0.0;
  double db = 0.0;
  double dc = 0.0;
  double dtau = 0.0;
};

/// Analytic partials of toy_solution; throws AtEventTime when t == tau.
[[nodiscard]] ToyGradients toy_gradients(const ToyParams& params, double x0, double t);

enum class PathologyFlag {
  None,
  WronglyZero,     ///< event time over-estimated: d x / d b vanishes although it should not
  WronglyNonzero,  ///< event time under-estimated: d x / d b is nonzero although it should vanish
};

[[nodiscard]] const char* to_string(PathologyFlag flag) noexcept;

struct PathologySample {
  double t = 0.0;
  int true_mode = 0;
  int estimated_mode = 0;
  double grad_b_true = 0.0;
  double grad_b_estimated = 0.0;
  PathologyFlag flag = PathologyFlag::None;
};

struct PathologyReport {
  double tau = 0.0;
  double tau_estimate = 0.0;
  std::vector<PathologySample> samples;
  int wrongly_zero = 0;
  int wrongly_nonzero = 0;
};

/// Classifies each sample time under the true and the estimated event time
/// and flags samples whose gradient with respect to b is corrupted.
[[nodiscard]] PathologyReport pathology_report(const ToyParams& params, double tau_estimate,
                                               const std::vector<double>& sample_times, double x0 = 1.0);

// ---------------------------------------------------------------------------
// Differential-drive robot: state (x1, x2, theta), input (u_v, u_r).
// ---------------------------------------------------------------------------

using DiffDriveControl = std::function<Eigen::Vector2d(double t, const StateVec& x)>;

[[nodiscard]] Flow make_diff_drive(DiffDriveControl control);

/// Single-mode system with constant inputs; used by the CLI.
[[nodiscard]] HybridSystemDef make_diff_drive_system(double u_v, double u_r);

/// Names accepted by `system_by_name`: tcp-reno, sls, toy, diff-drive.
[[nodiscard]] std::vector<std::string> system_names();
[[nodiscard]] HybridSystemDef system_by_name(const std::string& name);

}  // namespace hal::systems
