#pragma once

#include "hal/mlp.hpp"
#include "hal/random.hpp"
#include "hal/tape.hpp"
#include "hal/types.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <tuple>
#include <string>
#include <utility>
#include <vector>

namespace hal::recovery {

using nn::Matrix;
using nn::Var;

/// How the encoder output becomes the decoder mixing weights z.
enum class LatentKind {
  Categorical,      ///< one-hot sample with straight-through gradients
  Softmax,          ///< z = softmax(logits)
  GaussianReparam,  ///< z = mu + sigma * eps
  Deterministic,    ///< z = encoder output
  None,             ///< no encoder; one deeper field on a zero-augmented state
};

[[nodiscard]] const char* to_string(LatentKind k) noexcept;
[[nodiscard]] LatentKind latent_kind_from_string(const std::string& s);

/// Per-column affine normalization.
struct Standardizer {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd scale;

  [[nodiscard]] static Standardizer fit(const Matrix& rows);
  [[nodiscard]] static Standardizer identity(int dim);
  [[nodiscard]] Matrix apply(const Matrix& rows) const;
  [[nodiscard]] Matrix invert(const Matrix& rows) const;
  [[nodiscard]] bool empty() const noexcept { return mean.size() == 0; }
};

/// Summary of one subtrajectory: first, last and mean state, first finite
/// difference (not divided by the step) and log(1 + duration).
[[nodiscard]] constexpr int feature_dim(int state_dim) noexcept { return 4 * state_dim + 1; }
[[nodiscard]] Eigen::RowVectorXd segment_features(const Subtrajectory& seg);
[[nodiscard]] Matrix segment_features(const std::vector<Subtrajectory>& segs);

struct ModelConfig {
  int n_modes = 3;
  LatentKind latent = LatentKind::Categorical;
  std::vector<int> encoder_hidden{64, 64, 64};
  nn::Activation encoder_activation = nn::Activation::ReLU;
  double encoder_dropout = 0.3;
  /// Hidden widths of each mode field; empty gives affine fields.
  std::vector<int> field_hidden;
  std::vector<nn::Activation> field_activations;
  /// Decoder of the LatentKind::None baseline.
  std::vector<int> anode_hidden{64, 64};
  int anode_augment = 2;
  /// Encoder reads the current state at every integration step instead of
  /// a per-segment summary; z is redrawn at each step.
  bool per_step = false;

  void validate() const;
};

/// Encoder plus mode-conditioned decoder x' = sum_i z_i f_i(x).
///
/// Fields act on standardized states and return standardized derivatives;
/// the physical flow is scale * f((x - mean) / scale).
class NhaRecoveryModel {
 public:
  NhaRecoveryModel() = default;
  NhaRecoveryModel(ModelConfig config, int state_dim, std::uint64_t seed);

  [[nodiscard]] const ModelConfig& config() const noexcept { return config_; }
  [[nodiscard]] int n_modes() const noexcept { return config_.n_modes; }
  [[nodiscard]] int state_dim() const noexcept { return state_dim_; }
  [[nodiscard]] int field_dim() const noexcept;
  [[nodiscard]] bool has_encoder() const noexcept { return config_.latent != LatentKind::None; }

  [[nodiscard]] nn::Mlp& encoder() { return encoder_; }
  [[nodiscard]] const nn::Mlp& encoder() const { return encoder_; }
  [[nodiscard]] std::vector<nn::Mlp>& fields() { return fields_; }
  [[nodiscard]] const std::vector<nn::Mlp>& fields() const { return fields_; }

  Standardizer state_scaler;
  Standardizer feature_scaler;
  /// Label remapping produced by prune_modes (identity when empty).
  std::vector<int> mode_alias;

  [[nodiscard]] std::vector<nn::ParamTensor*> encoder_parameters();
  [[nodiscard]] std::vector<nn::ParamTensor*> decoder_parameters();

  /// Deterministic latent for raw encoder inputs (features or states):
  /// probabilities for Categorical/Softmax, mu for GaussianReparam, the raw
  /// output for Deterministic. Rows are inputs.
  [[nodiscard]] Matrix latent_mean(const Matrix& raw_inputs) const;
  /// Evaluation-time z: one-hot argmax for Categorical, latent_mean otherwise.
  [[nodiscard]] Matrix eval_latent(const Matrix& raw_inputs) const;

  /// Normalized field of mode i (or the single augmented field) at standardized x.
  [[nodiscard]] Matrix field_values(int i, const Matrix& x_std) const;

  /// Taped pieces used by training.
  [[nodiscard]] Var mixed_field(nn::Tape& tape, Var x_std, Var z);
  /// z for standardized encoder inputs; `rng` draws categorical/Gaussian samples.
  [[nodiscard]] Var encode(nn::Tape& tape, Var inputs_std, bool train, Rng* rng);

  /// Per-segment labels (argmax of latent_mean, aliases applied).
  [[nodiscard]] std::vector<int> predict_modes(const std::vector<Subtrajectory>& segs) const;
  /// Per-state labels for a per-step encoder.
  [[nodiscard]] std::vector<int> predict_state_modes(const Matrix& states) const;
  [[nodiscard]] int apply_alias(int mode) const;

 private:
  ModelConfig config_;
  int state_dim_ = 0;
  nn::Mlp encoder_;
  std::vector<nn::Mlp> fields_;
};

/// sum_i z_i f_i(t, x) in physical units.
[[nodiscard]] Eigen::VectorXd decode_flow(const NhaRecoveryModel& model, const Eigen::VectorXd& z, double t,
                                          const Eigen::VectorXd& x);

/// RK4 on the segment's own time grid from its first state with fixed z.
/// Returns one predicted state per sample (rows).
[[nodiscard]] Matrix reconstruct_subtrajectory(const NhaRecoveryModel& model, const Subtrajectory& seg,
                                               const Eigen::VectorXd& z);
/// Same, with z recomputed from the predicted state at every step
/// (argmax, or a categorical draw when rng is given).
[[nodiscard]] Matrix reconstruct_per_step(const NhaRecoveryModel& model, const Subtrajectory& seg, Rng* rng = nullptr);

/// Mean over segments of the standardized per-segment reconstruction MSE.
[[nodiscard]] double reconstruction_mse(const NhaRecoveryModel& model, const std::vector<Subtrajectory>& segs);

struct TrainConfig {
  int iterations = 4000;
  double encoder_lr = 5e-4;
  double decoder_lr = 1e-2;
  int batch_size = 0;     ///< segments (or windows) per step; <= 0 uses every segment
  int window = 32;        ///< samples per training window
  double fd_weight = 0.0; ///< weight of the finite-difference penalty
  std::uint64_t seed = 0;
  int log_every = 0;      ///< progress to stderr every n iterations; 0 is silent
};

struct RecoveryReport {
  std::vector<int> segment_modes;
  std::vector<double> loss_history;
  double train_mse = 0.0;
  double val_mse = std::numeric_limits<double>::quiet_NaN();
  double test_mse = std::numeric_limits<double>::quiet_NaN();
  std::optional<double> v_measure;
  std::map<int, int> cluster_sizes;
  int iterations = 0;
};

/// Fits scalers on `train`, then minimizes the mean per-segment MSE of the
/// RK4-unrolled reconstruction with Adam. Throws DivergedLoss on a
/// non-finite loss.
RecoveryReport train_recovery(NhaRecoveryModel& model, const std::vector<Subtrajectory>& train,
                              const TrainConfig& config);

[[nodiscard]] std::string report_to_json(const RecoveryReport& report);
[[nodiscard]] std::string model_to_json(const NhaRecoveryModel& model);
[[nodiscard]] NhaRecoveryModel model_from_json(const std::string& text);

struct PruneReport {
  Matrix distances;  ///< mean L1 field distance; NaN for unused modes
  std::vector<std::tuple<int, int, double>> merges;
  std::vector<int> alias;
  int n_modes_after = 0;
};

/// Mean L1 distance between fields over `states` (physical rows) for every
/// pair of `used` modes (all modes when empty). Pairs below `threshold` are
/// merged transitively onto the smaller index; the alias is stored in the model.
PruneReport prune_modes(NhaRecoveryModel& model, const Matrix& states, double threshold,
                        const std::vector<int>& used = {});

struct EventSample {
  double tau = 0.0;       ///< duration of the earlier segment
  double t_start = 0.0;   ///< start time of the earlier segment
  double t_event = 0.0;   ///< first time of the later segment
  Eigen::VectorXd x_start;
  Eigen::VectorXd x_pre;
  Eigen::VectorXd x_post;
};

using Edge = std::pair<int, int>;
using EventSupervision = std::map<Edge, std::vector<EventSample>>;

/// One sample per adjacent segment pair of a parent; every segment must carry
/// recovered_mode.
[[nodiscard]] EventSupervision collect_event_supervision(const std::vector<Subtrajectory>& segments);
[[nodiscard]] std::size_t supervision_size(const EventSupervision& sup);

/// Label helpers for evaluation.
[[nodiscard]] std::vector<int> expand_to_samples(const std::vector<Subtrajectory>& segs,
                                                 const std::vector<int>& segment_labels);
[[nodiscard]] std::vector<int> true_sample_modes(const std::vector<Subtrajectory>& segs,
                                                 const std::vector<Trajectory>& parents);
[[nodiscard]] std::vector<int> true_segment_modes(const std::vector<Subtrajectory>& segs,
                                                  const std::vector<Trajectory>& parents);

}  // namespace hal::recovery
