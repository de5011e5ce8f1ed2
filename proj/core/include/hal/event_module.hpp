#pragma once

#include "hal/hybrid_solver.hpp"
#include "hal/mlp.hpp"
#include "hal/random.hpp"
#include "hal/recovery.hpp"
#include "hal/spline_flow.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace hal::events {

using nn::Matrix;
using recovery::Edge;
using recovery::EventSupervision;

[[nodiscard]] std::string edge_key(const Edge& e);
[[nodiscard]] Edge edge_from_key(const std::string& key);

/// Residual jump map x+ = x + out_scale * MLP((x - in_mean) / in_scale).
/// The last layer starts at zero, so an untrained net is the identity.
class JumpNet {
 public:
  JumpNet() = default;
  JumpNet(int state_dim, int hidden, Rng& rng);
  JumpNet(nn::Mlp mlp, recovery::Standardizer input, Eigen::RowVectorXd out_scale);

  /// Fits the input standardization and the residual output scale.
  void fit_scalers(const Matrix& x_pre, const Matrix& x_post);

  [[nodiscard]] Eigen::VectorXd apply(const Eigen::VectorXd& x) const;
  [[nodiscard]] Matrix apply(const Matrix& rows) const;
  [[nodiscard]] nn::Var forward(nn::Tape& tape, const Matrix& rows);

  [[nodiscard]] nn::Mlp& mlp() noexcept { return mlp_; }
  [[nodiscard]] const nn::Mlp& mlp() const noexcept { return mlp_; }
  [[nodiscard]] const recovery::Standardizer& input_scaler() const noexcept { return input_; }
  [[nodiscard]] const Eigen::RowVectorXd& out_scale() const noexcept { return out_scale_; }

 private:
  nn::Mlp mlp_;
  recovery::Standardizer input_;
  Eigen::RowVectorXd out_scale_;
};

struct EventModuleConfig {
  flow::SplineFlowConfig flow;
  /// Append the standardized state and time at the previous event to the
  /// one-hot edge code.
  bool condition_on_state = false;
  int jump_hidden = 32;
  int iterations = 4000;
  double lr = 2e-3;
  std::uint64_t seed = 0;
  int log_every = 0;
};

/// One interevent-time flow and one jump net per observed edge (z, z').
class EventModule {
 public:
  EventModule() = default;
  EventModule(int n_modes, int state_dim, EventModuleConfig config);

  [[nodiscard]] int n_modes() const noexcept { return n_modes_; }
  [[nodiscard]] int state_dim() const noexcept { return state_dim_; }
  [[nodiscard]] const EventModuleConfig& config() const noexcept { return config_; }
  [[nodiscard]] int cond_dim() const noexcept;

  [[nodiscard]] bool has_edge(const Edge& e) const { return flows_.count(e) > 0; }
  [[nodiscard]] std::vector<Edge> edges() const;
  [[nodiscard]] std::vector<Edge> outgoing(int z) const;

  /// Adds an identity-initialized flow and jump net for `e`.
  void add_edge(const Edge& e, Rng& rng);
  [[nodiscard]] flow::SplineFlow& flow(const Edge& e);
  [[nodiscard]] const flow::SplineFlow& flow(const Edge& e) const;
  [[nodiscard]] JumpNet& jump(const Edge& e);
  [[nodiscard]] const JumpNet& jump(const Edge& e) const;

  /// One-hot edge code, optionally followed by standardized (x, t).
  [[nodiscard]] Eigen::RowVectorXd conditioning(const Edge& e, const Eigen::VectorXd& x, double t) const;

  [[nodiscard]] double log_density(const Edge& e, double tau, const Eigen::VectorXd& x, double t) const;
  [[nodiscard]] double sample_tau(const Edge& e, const Eigen::VectorXd& x, double t, Rng& rng) const;
  [[nodiscard]] Eigen::VectorXd apply_jump(const Edge& e, const Eigen::VectorXd& x) const;

  recovery::Standardizer state_scaler;
  double time_scale = 1.0;

 private:
  int n_modes_ = 0;
  int state_dim_ = 0;
  EventModuleConfig config_;
  std::map<Edge, flow::SplineFlow> flows_;
  std::map<Edge, JumpNet> jumps_;
};

struct EdgeMetrics {
  int n = 0;
  double nll = 0.0;       ///< mean -log p(tau); NaN when the edge has no flow
  double jump_mse = 0.0;  ///< mean squared error of x+ over samples and state dims
};

struct EventEvaluation {
  std::map<Edge, EdgeMetrics> edges;
  double pooled_nll = 0.0;
  double pooled_jump_mse = 0.0;
  int n_nll = 0;
  int n_jump = 0;
};

/// Maximum likelihood for the flows and MSE regression for the jump nets,
/// each edge trained independently with Adam. Edges without a flow in
/// `module` are created. Throws NoSupervision when `train` is empty.
EventEvaluation train_event_module(EventModule& module, const EventSupervision& train);

/// Metrics on held-out supervision. Edges unknown to the module count toward
/// the pooled jump MSE with the identity jump and are left out of the NLL.
[[nodiscard]] EventEvaluation evaluate_event_module(const EventModule& module, const EventSupervision& test);

struct NextEvent {
  double time = 0.0;
  double tau = 0.0;
  int target = 0;
};

/// One candidate time per outgoing edge; the smallest wins, ties to the
/// smaller target. Throws NoOutgoingEdges.
[[nodiscard]] NextEvent sample_next_event(const EventModule& module, int z, double t_k, const Eigen::VectorXd& x,
                                          Rng& rng);

struct NhaSimConfig {
  double dt = 0.1;  ///< RK4 step and output grid
  double max_events_per_unit_time = 1e4;
};

/// Closed-loop generation: integrate the decoder under the current mode until
/// the sampled event time, apply the learned jump, switch mode, repeat.
[[nodiscard]] HybridSolution simulate_nha(const recovery::NhaRecoveryModel& model, const EventModule& module,
                                          const Eigen::VectorXd& x0, int z0, double t0, double horizon, Rng& rng,
                                          const NhaSimConfig& config = {});

struct DwellStatistics {
  std::map<int, double> mean_dwell;
  std::map<int, int> dwell_count;
  std::map<Edge, int> edge_count;
};

/// Completed mode intervals between recorded event times (the final,
/// truncated interval of each trajectory is ignored).
[[nodiscard]] DwellStatistics dwell_statistics(const std::vector<Trajectory>& trajectories);

[[nodiscard]] std::string module_to_json(const EventModule& module);
[[nodiscard]] EventModule module_from_json(const std::string& text);
[[nodiscard]] std::string evaluation_to_json(const EventEvaluation& eval);

}  // namespace hal::events
