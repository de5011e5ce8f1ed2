#pragma once

#include "hal/event_module.hpp"
#include "hal/recovery.hpp"
#include "hal/solvers.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>

namespace hal::cli {

using json = nlohmann::json;

struct ExperimentConfig {
  std::string system = "tcp-reno";
  int n_traj = 40;
  double horizon = 200.0;
  std::uint64_t seed = 0;
  SolverConfig solver;

  /// <= 0 picks each trajectory's default threshold.
  double threshold = 0.0;
  double corrupt_p = 0.0;

  recovery::ModelConfig model;
  recovery::TrainConfig train;
  int folds = 5;
  int n_test = 15;
  int n_seeds = 1;
  std::string baseline;
  double eps = 0.5;
  int min_pts = 5;
  double prune_threshold = 0.0;

  events::EventModuleConfig events;
  int n_supervision = 0;  ///< trajectories used for event supervision; 0 uses all

  std::filesystem::path output_dir = ".";
};

/// Defaults for the TCP experiment ("tcp-paper") and the switching linear
/// system ablation ("sls-ablation").
[[nodiscard]] ExperimentConfig preset(const std::string& name);

/// Overlays the keys present in `j` onto `config`. Unknown keys and wrong
/// types throw Error(Schema).
void apply_json(ExperimentConfig& config, const json& j);
[[nodiscard]] json to_json(const ExperimentConfig& config);

/// HAL_SEED, when set, replaces every seed.
void apply_seed_override(ExperimentConfig& config);

}  // namespace hal::cli
