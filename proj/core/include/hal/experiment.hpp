#pragma once

#include "hal/recovery.hpp"
#include "hal/solvers.hpp"
#include "hal/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace hal::experiment {

/// Dataset generation settings: Dormand-Prince at 1e-6 / 1e-6 with event
/// tolerance 1e-4, recorded on a per-system output grid.
[[nodiscard]] SolverConfig default_solver(const std::string& system);

/// Initial state of trajectory `index`: fixed for tcp-reno, toy and
/// diff-drive, uniform over [-2, 4] x [-3, 3] for sls.
[[nodiscard]] StateVec initial_state(const std::string& system, std::uint64_t seed, std::size_t index);

struct SimulationSummary {
  std::vector<int> events_per_trajectory;
  std::vector<int> modes_visited;
};

/// Simulates `n_traj` trajectories on [0, horizon]; trajectory i uses its
/// own seed stream and the id "<system>-<i>".
[[nodiscard]] std::vector<Trajectory> simulate_dataset(const std::string& system, int n_traj, double horizon,
                                                       std::uint64_t seed, const SolverConfig& solver,
                                                       SimulationSummary* summary = nullptr);

enum class Baseline { KMeans, Hierarchical, Dbscan, LatentNode, DcNode, Anode };

[[nodiscard]] const char* to_string(Baseline b) noexcept;
[[nodiscard]] Baseline baseline_from_string(const std::string& s);
/// True for the three classical clustering baselines.
[[nodiscard]] bool is_clustering(Baseline b) noexcept;

/// Clusters standardized segment features.
[[nodiscard]] std::vector<int> cluster_segments(const std::vector<Subtrajectory>& segs, Baseline baseline, int k,
                                                double eps, int min_pts, std::uint64_t seed);

/// Model configuration of a neural baseline (or the NHA model for Categorical).
[[nodiscard]] recovery::ModelConfig baseline_model(Baseline b, const recovery::ModelConfig& base);

struct Split {
  std::vector<std::string> test_ids;
  std::vector<std::vector<std::string>> folds;
};

/// Shuffled split of trajectory ids: the last `n_test` ids are held out, the
/// rest dealt round-robin into `n_folds` folds.
[[nodiscard]] Split split_trajectories(const std::vector<Trajectory>& dataset, int n_folds, int n_test,
                                       std::uint64_t seed);

[[nodiscard]] std::vector<Subtrajectory> segments_of(const std::vector<Subtrajectory>& segs,
                                                     const std::vector<std::string>& ids);

struct CvResult {
  recovery::NhaRecoveryModel best;
  recovery::RecoveryReport best_report;
  std::vector<double> fold_val_mse;
  int best_fold = 0;
};

/// Trains one model per fold (validating on that fold) and keeps the one with
/// the lowest validation MSE. A single fold trains on everything.
[[nodiscard]] CvResult cross_validate(const std::vector<Subtrajectory>& segs, const Split& split,
                                      const recovery::ModelConfig& model, const recovery::TrainConfig& train,
                                      int state_dim);

/// Per-sample labels of `segs` from a trained model (per-state for per-step encoders).
[[nodiscard]] std::vector<int> sample_labels(const recovery::NhaRecoveryModel& model,
                                             const std::vector<Subtrajectory>& segs);

}  // namespace hal::experiment
