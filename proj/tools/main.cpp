#include "commands.hpp"
#include "config.hpp"

#include "hal/error.hpp"
#include "hal/experiment.hpp"
#include "hal/recovery.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace {

using hal::ErrorCode;
using namespace hal::cli;

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::StepUnderflow:
    case ErrorCode::NonFiniteFlow:
    case ErrorCode::NoSignChange:
    case ErrorCode::ZenoGuard:
      return 3;
    case ErrorCode::DivergedLoss:
    case ErrorCode::NoSupervision:
      return 4;
    default:
      return 2;
  }
}

/// Flag values that were given on the command line; applied last.
struct Overrides {
  std::optional<std::string> system;
  std::optional<int> n_traj;
  std::optional<double> horizon;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> method;
  std::optional<double> output_dt;
  std::optional<double> threshold;
  std::optional<double> corrupt_p;
  std::optional<int> modes;
  std::optional<std::string> latent;
  std::optional<int> iterations;
  std::optional<int> batch_size;
  std::optional<int> window;
  std::optional<double> encoder_lr;
  std::optional<double> decoder_lr;
  std::optional<double> fd_weight;
  std::optional<int> folds;
  std::optional<int> n_test;
  std::optional<int> n_seeds;
  std::optional<std::string> baseline;
  std::optional<double> eps;
  std::optional<int> min_pts;
  std::optional<double> prune_threshold;
  bool per_step = false;
  std::optional<int> n_supervision;
  std::optional<int> event_iterations;
  std::optional<double> event_lr;
  std::optional<std::string> output_dir;
};

template <typename T>
void take(const std::optional<T>& v, T& dst) {
  if (v) dst = *v;
}

ExperimentConfig build_config(const std::optional<std::string>& preset_name, const std::optional<std::string>& config_path,
                              const Overrides& o) {
  ExperimentConfig c = preset_name ? preset(*preset_name) : ExperimentConfig{};
  if (!preset_name) c.solver = hal::experiment::default_solver("tcp-reno");
  if (config_path) {
    std::ifstream is(*config_path);
    if (!is) throw hal::Error(ErrorCode::Io, "cannot read config " + *config_path);
    json j;
    try {
      j = json::parse(is);
    } catch (const json::parse_error& e) {
      throw hal::Error(ErrorCode::Schema, "config " + *config_path + ": " + e.what());
    }
    apply_json(c, j);
  }
  if (o.system && *o.system != c.system) {
    c.system = *o.system;
    c.solver = hal::experiment::default_solver(c.system);
  }
  take(o.n_traj, c.n_traj);
  take(o.horizon, c.horizon);
  take(o.seed, c.seed);
  if (o.method) {
    if (*o.method == "rk4") {
      c.solver.method = hal::Method::RK4;
    } else if (*o.method == "dopri5") {
      c.solver.method = hal::Method::DormandPrince;
    } else {
      throw hal::Error(ErrorCode::InvalidArgument, "--method must be rk4 or dopri5");
    }
  }
  if (o.output_dt) c.solver.output_dt = *o.output_dt;
  take(o.threshold, c.threshold);
  take(o.corrupt_p, c.corrupt_p);
  take(o.modes, c.model.n_modes);
  if (o.latent) c.model.latent = hal::recovery::latent_kind_from_string(*o.latent);
  take(o.iterations, c.train.iterations);
  take(o.batch_size, c.train.batch_size);
  take(o.window, c.train.window);
  take(o.encoder_lr, c.train.encoder_lr);
  take(o.decoder_lr, c.train.decoder_lr);
  take(o.fd_weight, c.train.fd_weight);
  take(o.folds, c.folds);
  take(o.n_test, c.n_test);
  take(o.n_seeds, c.n_seeds);
  take(o.baseline, c.baseline);
  take(o.eps, c.eps);
  take(o.min_pts, c.min_pts);
  take(o.prune_threshold, c.prune_threshold);
  if (o.per_step) c.model.per_step = true;
  take(o.n_supervision, c.n_supervision);
  take(o.event_iterations, c.events.iterations);
  take(o.event_lr, c.events.lr);
  if (o.output_dir) c.output_dir = *o.output_dir;
  apply_seed_override(c);
  c.model.validate();
  c.solver.validate();
  if (!c.baseline.empty()) (void)hal::experiment::baseline_from_string(c.baseline);
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hybrid automaton learning: simulation, segmentation, mode recovery and event models"};
  app.require_subcommand(1);
  app.fallthrough();

  std::optional<std::string> preset_name, config_path;
  bool dump_config = false;
  Overrides o;
  app.add_option("--preset", preset_name, "Bundled defaults: tcp-paper or sls-ablation");
  app.add_option("--config", config_path, "JSON experiment config");
  app.add_option("--seed", o.seed, "Master seed (HAL_SEED overrides)");
  app.add_option("--output-dir", o.output_dir, "Directory for outputs");
  app.add_flag("--dump-config", dump_config, "Print the resolved config as JSON");

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Simulate a reference system into a JSON Lines dataset");
  simulate->add_option("--system", o.system, "tcp-reno, sls, toy or diff-drive");
  simulate->add_option("--n-traj", o.n_traj, "Number of trajectories");
  simulate->add_option("--horizon", o.horizon, "Length of each trajectory");
  simulate->add_option("--method", o.method, "rk4 or dopri5");
  simulate->add_option("--output-dt", o.output_dt, "Output grid spacing");
  simulate->add_option("--out", sim.out, "Dataset path (default <output-dir>/dataset.jsonl)");

  SegmentArgs seg;
  auto* segment = app.add_subcommand("segment", "Cut trajectories at finite-difference discontinuities");
  segment->add_option("--dataset", seg.dataset, "Dataset file")->required();
  segment->add_option("--threshold", o.threshold, "Finite-difference threshold; <= 0 uses 5x the median");
  segment->add_option("--corrupt-p", o.corrupt_p, "Probability of shifting each cut");
  segment->add_option("--out", seg.out, "Segment file (default next to the dataset)");

  RecoverArgs rec;
  auto* recover = app.add_subcommand("recover", "Self-supervised mode recovery with cross-validation");
  recover->add_option("--dataset", rec.dataset, "Dataset file")->required();
  recover->add_option("--segments", rec.segments, "Segment file");
  recover->add_option("--modes,-m", o.modes, "Number of latent modes");
  recover->add_option("--latent", o.latent, "categorical, softmax, latent-node, dc-node or anode");
  recover->add_option("--iterations", o.iterations, "Training iterations per fold");
  recover->add_option("--batch-size", o.batch_size, "Windows per iteration (0 = all)");
  recover->add_option("--window", o.window, "Samples per training window");
  recover->add_option("--encoder-lr", o.encoder_lr, "Encoder learning rate");
  recover->add_option("--decoder-lr", o.decoder_lr, "Decoder learning rate");
  recover->add_option("--fd-weight", o.fd_weight, "Finite-difference penalty weight");
  recover->add_flag("--per-step", o.per_step, "Encode the state at every integration step");
  recover->add_option("--folds", o.folds, "Cross-validation folds");
  recover->add_option("--n-test", o.n_test, "Held-out test trajectories");
  recover->add_option("--n-seeds", o.n_seeds, "Repeat with consecutive seeds");
  recover->add_option("--baseline", o.baseline, "kmeans, hier, dbscan, latent-node, dc-node or anode");
  recover->add_option("--eps", o.eps, "DBSCAN neighbourhood radius");
  recover->add_option("--min-pts", o.min_pts, "DBSCAN core point size");
  recover->add_option("--prune-threshold", o.prune_threshold, "Merge modes whose fields are closer than this (L1)");

  TrainEventsArgs tev;
  auto* train_events = app.add_subcommand("train-events", "Fit interevent-time flows and jump maps per edge");
  train_events->add_option("--dataset", tev.dataset, "Dataset file")->required();
  train_events->add_option("--segments", tev.segments, "Labeled segment file");
  train_events->add_option("--n-supervision", o.n_supervision, "Trajectories supplying supervision (0 = all)");
  train_events->add_option("--iterations", o.event_iterations, "Adam iterations per edge");
  train_events->add_option("--lr", o.event_lr, "Learning rate");
  train_events->add_option("--modes,-m", o.modes, "Number of modes");
  train_events->add_option("--n-test", o.n_test, "Held-out test trajectories");
  train_events->add_flag("--truth", tev.use_truth, "Use ground-truth mode labels");

  EvaluateArgs ev;
  auto* evaluate = app.add_subcommand("evaluate", "Closed-loop simulation statistics against held-out data");
  evaluate->add_option("--model", ev.model, "Recovery checkpoint")->required();
  evaluate->add_option("--events", ev.events, "Event module checkpoint")->required();
  evaluate->add_option("--dataset", ev.dataset, "Dataset file")->required();
  evaluate->add_option("--segments", ev.segments, "Labeled segment file");
  evaluate->add_option("--n-test", o.n_test, "Held-out test trajectories");
  evaluate->add_option("--out", ev.out, "Evaluation JSON (default <output-dir>/evaluation.json)");

  PathologyArgs pa;
  auto* pathology = app.add_subcommand("pathology", "Gradient pathology of a mis-estimated event time");
  pathology->add_option("--a", pa.a, "Rate before the event");
  pathology->add_option("--b", pa.b, "Rate after the event");
  pathology->add_option("--c", pa.c, "Jump factor");
  pathology->add_option("--tau", pa.tau, "True event time");
  pathology->add_option("--x0", pa.x0, "Initial state");
  pathology->add_option("--tau-min", pa.tau_min, "Smallest estimate");
  pathology->add_option("--tau-max", pa.tau_max, "Largest estimate");
  pathology->add_option("--n-tau", pa.n_tau, "Number of estimates");
  pathology->add_option("--n-samples", pa.n_samples, "Sample times in (0, 1)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    const auto config = build_config(preset_name, config_path, o);
    if (dump_config) std::cout << to_json(config).dump(2) << '\n';
    if (simulate->parsed()) return cmd_simulate(config, sim);
    if (segment->parsed()) return cmd_segment(config, seg);
    if (recover->parsed()) return cmd_recover(config, rec);
    if (train_events->parsed()) return cmd_train_events(config, tev);
    if (evaluate->parsed()) return cmd_evaluate(config, ev);
    if (pathology->parsed()) return cmd_pathology(config, pa);
  } catch (const hal::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
