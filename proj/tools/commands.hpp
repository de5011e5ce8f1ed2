#pragma once

#include "config.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace hal::cli {

namespace fs = std::filesystem;

struct SimulateArgs {
  fs::path out;
};

struct SegmentArgs {
  fs::path dataset;
  fs::path out;
};

struct RecoverArgs {
  fs::path dataset;
  fs::path segments;
};

struct TrainEventsArgs {
  fs::path dataset;
  fs::path segments;
  bool use_truth = false;
};

struct EvaluateArgs {
  fs::path model;
  fs::path events;
  fs::path dataset;
  fs::path segments;
  fs::path out;
};

struct PathologyArgs {
  double a = 1.0;
  double b = -1.0;
  double c = 0.5;
  double tau = 0.5;
  double x0 = 1.0;
  double tau_min = 0.1;
  double tau_max = 0.9;
  int n_tau = 9;
  int n_samples = 50;
};

/// Each command returns the process exit code; library errors propagate.
int cmd_simulate(const ExperimentConfig& config, const SimulateArgs& args);
int cmd_segment(const ExperimentConfig& config, const SegmentArgs& args);
int cmd_recover(const ExperimentConfig& config, const RecoverArgs& args);
int cmd_train_events(const ExperimentConfig& config, const TrainEventsArgs& args);
int cmd_evaluate(const ExperimentConfig& config, const EvaluateArgs& args);
int cmd_pathology(const ExperimentConfig& config, const PathologyArgs& args);

/// <dir>/<stem>.segments.jsonl next to a dataset file.
[[nodiscard]] fs::path default_segments_path(const fs::path& dataset);

}  // namespace hal::cli
