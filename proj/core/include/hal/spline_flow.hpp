#pragma once

#include "hal/mlp.hpp"
#include "hal/random.hpp"
#include "hal/tape.hpp"

#include <Eigen/Core>

#include <vector>

namespace hal::flow {

using nn::Matrix;
using nn::Var;

/// Knots of one monotone rational-quadratic spline on [-B, B]:
/// K + 1 x-positions, y-positions and derivatives (boundary derivatives 1).
struct RqKnots {
  Eigen::VectorXd xs;
  Eigen::VectorXd ys;
  Eigen::VectorXd ds;

  [[nodiscard]] int n_bins() const { return static_cast<int>(xs.size()) - 1; }
};

struct RqLimits {
  double min_width = 1e-3;
  double min_height = 1e-3;
  double min_derivative = 1e-3;
};

/// Raw parameters per spline: K width logits, K height logits, K - 1 interior
/// derivative pre-activations. All zeros gives the identity.
[[nodiscard]] inline int raw_params_per_spline(int n_bins) { return 3 * n_bins - 1; }

[[nodiscard]] RqKnots knots_from_raw(const Eigen::Ref<const Eigen::RowVectorXd>& raw, int n_bins, double bound,
                                     const RqLimits& limits = {});

/// Forward map with identity tails outside [xs[0], xs[K]]; writes log dy/dx.
[[nodiscard]] double rq_forward(const RqKnots& k, double x, double* logdet = nullptr);
/// Inverse map; writes log dx/dy.
[[nodiscard]] double rq_inverse(const RqKnots& k, double y, double* logdet = nullptr);

/// Taped knot construction from raw (B x (3K-1)) rows. Returns (xs, ys, ds),
/// each B x (K+1).
struct TapedKnots {
  Var xs;
  Var ys;
  Var ds;
};
[[nodiscard]] TapedKnots knots_from_raw(Var raw, int n_bins, double bound, const RqLimits& limits = {});

/// Taped spline: x (B x 1) through the per-row knots. Returns B x 2 with
/// columns (y, log dy/dx).
[[nodiscard]] Var rq_spline(Var x, Var xs, Var ys, Var ds);

struct SplineFlowConfig {
  int n_layers = 2;
  int n_bins = 8;
  double tail_bound = 5.0;
  std::vector<int> conditioner_hidden;  ///< empty: linear conditioner
  RqLimits limits;
};

/// Density of a positive interevent time tau, modeled on y = log tau:
///
///   u = S_L o ... o S_1((y - shift) / scale),  u ~ N(0, 1),
///   log p(tau) = log N(u) + sum log S' - log scale - log tau.
///
/// Each spline S_l takes its knots from a conditioner applied to the
/// conditioning row c. Zero conditioner weights, shift 0 and scale 1 give
/// the log-normal(0, 1) law.
class SplineFlow {
 public:
  SplineFlow() = default;
  /// Zero-initialized conditioner (identity transform).
  SplineFlow(SplineFlowConfig config, int cond_dim, Rng& rng);
  SplineFlow(SplineFlowConfig config, nn::Mlp conditioner, double shift, double log_scale);

  [[nodiscard]] double log_density(double tau, const Eigen::RowVectorXd& cond) const;
  /// Base variable u for y = log tau; accumulates log du/dy into logdet.
  [[nodiscard]] double to_base(double y, const Eigen::RowVectorXd& cond, double* logdet = nullptr) const;
  /// Inverse of to_base: returns y = log tau.
  [[nodiscard]] double from_base(double u, const Eigen::RowVectorXd& cond) const;
  [[nodiscard]] double sample(const Eigen::RowVectorXd& cond, Rng& rng) const;

  /// Taped log p(tau) per row: taus (B), cond (B x cond_dim) -> B x 1.
  [[nodiscard]] Var log_density(nn::Tape& tape, const Eigen::VectorXd& taus, const Matrix& cond);

  /// Sets the affine pre-normalization (data-dependent initialization).
  void set_affine(double shift, double log_scale);

  [[nodiscard]] std::vector<nn::ParamTensor*> parameter_ptrs();
  [[nodiscard]] const SplineFlowConfig& config() const noexcept { return config_; }
  [[nodiscard]] int cond_dim() const { return conditioner_.input_dim(); }
  [[nodiscard]] const nn::Mlp& conditioner() const noexcept { return conditioner_; }
  [[nodiscard]] nn::Mlp& conditioner() noexcept { return conditioner_; }
  [[nodiscard]] double shift() const { return shift_.value(0, 0); }
  [[nodiscard]] double log_scale() const { return log_scale_.value(0, 0); }

  /// Knots of every layer for one conditioning row.
  [[nodiscard]] std::vector<RqKnots> layer_knots(const Eigen::RowVectorXd& cond) const;

 private:
  SplineFlowConfig config_;
  nn::Mlp conditioner_;
  nn::ParamTensor shift_{"shift", Matrix::Zero(1, 1)};
  nn::ParamTensor log_scale_{"log_scale", Matrix::Zero(1, 1)};
};

struct FitConfig {
  int iterations = 4000;
  double lr = 2e-3;
  /// Set shift and log_scale from the mean and std of log tau first.
  bool data_init = true;
  int log_every = 0;
};

/// Full-batch maximum likelihood with Adam. Returns the mean NLL per
/// iteration. Throws NonPositiveTime for tau <= 0 and DivergedLoss.
std::vector<double> fit_flow(SplineFlow& flow, const Eigen::VectorXd& taus, const Matrix& cond,
                             const FitConfig& config);

}  // namespace hal::flow
