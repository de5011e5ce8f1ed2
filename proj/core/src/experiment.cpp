#include "hal/experiment.hpp"

#include "hal/clustering.hpp"
#include "hal/error.hpp"
#include "hal/hybrid_solver.hpp"
#include "hal/random.hpp"
#include "hal/reference_systems.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <set>
#include <unordered_set>

namespace hal::experiment {

SolverConfig default_solver(const std::string& system) {
  SolverConfig c;
  c.method = Method::DormandPrince;
  c.atol = 1e-6;
  c.rtol = 1e-6;
  c.event_tol = 1e-4;
  if (system == "tcp-reno") {
    c.output_dt = 0.1;
  } else if (system == "sls" || system == "diff-drive") {
    c.output_dt = 0.05;
  } else if (system == "toy") {
    c.output_dt = 0.01;
  } else {
    throw Error(ErrorCode::InvalidArgument, "unknown system '" + system + "'");
  }
  return c;
}

StateVec initial_state(const std::string& system, std::uint64_t seed, std::size_t index) {
  if (system == "tcp-reno") return systems::tcp_initial_state();
  if (system == "sls") {
    Rng rng = make_rng(seed, 1000 + index);
    StateVec x(2);
    x[0] = -2.0 + 6.0 * uniform01(rng);
    x[1] = -3.0 + 6.0 * uniform01(rng);
    return x;
  }
  if (system == "toy") return StateVec::Ones(1);
  if (system == "diff-drive") return StateVec::Zero(3);
  throw Error(ErrorCode::InvalidArgument, "unknown system '" + system + "'");
}

std::vector<Trajectory> simulate_dataset(const std::string& system, int n_traj, double horizon, std::uint64_t seed,
                                         const SolverConfig& solver, SimulationSummary* summary) {
  if (n_traj < 1) throw Error(ErrorCode::InvalidArgument, "n_traj must be positive");
  if (!(horizon > 0.0)) throw Error(ErrorCode::InvalidArgument, "horizon must be positive");
  const auto def = systems::system_by_name(system);
  std::vector<Trajectory> out;
  out.reserve(static_cast<std::size_t>(n_traj));
  for (int i = 0; i < n_traj; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    const StateVec x0 = initial_state(system, seed, idx);
    const ModeId z0 = system == "sls" ? systems::sls_region(Eigen::Vector2d(x0[0], x0[1])) : def.initial_mode;
    const auto sol = odeint_hybrid(def, x0, z0, 0.0, horizon, solver, mix_seed(seed, idx));
    out.push_back(to_trajectory(sol, system + "-" + std::to_string(i)));
    if (summary) {
      summary->events_per_trajectory.push_back(static_cast<int>(sol.events.size()));
      std::set<int> visited;
      for (const auto& m : *out.back().modes) visited.insert(m.index);
      summary->modes_visited.push_back(static_cast<int>(visited.size()));
    }
  }
  return out;
}

const char* to_string(Baseline b) noexcept {
  switch (b) {
    case Baseline::KMeans: return "kmeans";
    case Baseline::Hierarchical: return "hier";
    case Baseline::Dbscan: return "dbscan";
    case Baseline::LatentNode: return "latent-node";
    case Baseline::DcNode: return "dc-node";
    case Baseline::Anode: return "anode";
  }
  return "?";
}

Baseline baseline_from_string(const std::string& s) {
  for (auto b : {Baseline::KMeans, Baseline::Hierarchical, Baseline::Dbscan, Baseline::LatentNode, Baseline::DcNode,
                 Baseline::Anode}) {
    if (s == to_string(b)) return b;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown baseline '" + s + "'");
}

bool is_clustering(Baseline b) noexcept {
  return b == Baseline::KMeans || b == Baseline::Hierarchical || b == Baseline::Dbscan;
}

std::vector<int> cluster_segments(const std::vector<Subtrajectory>& segs, Baseline baseline, int k, double eps,
                                  int min_pts, std::uint64_t seed) {
  if (segs.empty()) return {};
  const auto raw = recovery::segment_features(segs);
  const auto feats = recovery::Standardizer::fit(raw).apply(raw);
  const int kk = std::min<int>(k, static_cast<int>(segs.size()));
  switch (baseline) {
    case Baseline::KMeans: return cluster::kmeanspp_restarts(feats, kk, seed, 10).labels;
    case Baseline::Hierarchical: return cluster::hierarchical_cluster(feats, kk);
    case Baseline::Dbscan: return cluster::dbscan(feats, eps, min_pts);
    default: throw Error(ErrorCode::InvalidArgument, std::string(to_string(baseline)) + " is not a clustering baseline");
  }
}

recovery::ModelConfig baseline_model(Baseline b, const recovery::ModelConfig& base) {
  auto c = base;
  switch (b) {
    case Baseline::LatentNode: c.latent = recovery::LatentKind::GaussianReparam; break;
    case Baseline::DcNode: c.latent = recovery::LatentKind::Deterministic; break;
    case Baseline::Anode: c.latent = recovery::LatentKind::None; break;
    default: throw Error(ErrorCode::InvalidArgument, std::string(to_string(b)) + " is not a neural baseline");
  }
  return c;
}

Split split_trajectories(const std::vector<Trajectory>& dataset, int n_folds, int n_test, std::uint64_t seed) {
  const int n = static_cast<int>(dataset.size());
  if (n_folds < 1) throw Error(ErrorCode::InvalidArgument, "need at least one fold");
  if (n_test < 0 || n - n_test < n_folds) throw Error(ErrorCode::InvalidArgument, "not enough trajectories to split");
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = make_rng(seed, 7);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
  Split s;
  s.folds.resize(static_cast<std::size_t>(n_folds));
  const int n_cv = n - n_test;
  for (int i = 0; i < n; ++i) {
    const auto& id = dataset[order[static_cast<std::size_t>(i)]].id;
    if (i < n_cv) {
      s.folds[static_cast<std::size_t>(i % n_folds)].push_back(id);
    } else {
      s.test_ids.push_back(id);
    }
  }
  return s;
}

std::vector<Subtrajectory> segments_of(const std::vector<Subtrajectory>& segs, const std::vector<std::string>& ids) {
  const std::unordered_set<std::string> keep(ids.begin(), ids.end());
  std::vector<Subtrajectory> out;
  for (const auto& s : segs) {
    if (keep.count(s.parent_id)) out.push_back(s);
  }
  return out;
}

CvResult cross_validate(const std::vector<Subtrajectory>& segs, const Split& split, const recovery::ModelConfig& model,
                        const recovery::TrainConfig& train, int state_dim) {
  CvResult out;
  const auto n_folds = split.folds.size();
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t f = 0; f < n_folds; ++f) {
    std::vector<std::string> train_ids, val_ids;
    for (std::size_t g = 0; g < n_folds; ++g) {
      auto& dst = (g == f && n_folds > 1) ? val_ids : train_ids;
      dst.insert(dst.end(), split.folds[g].begin(), split.folds[g].end());
    }
    const auto train_segs = segments_of(segs, train_ids);
    auto tc = train;
    tc.seed = mix_seed(train.seed, f);
    recovery::NhaRecoveryModel m(model, state_dim, tc.seed);
    auto report = recovery::train_recovery(m, train_segs, tc);
    const auto val_segs = segments_of(segs, val_ids);
    report.val_mse = val_segs.empty() ? report.train_mse : recovery::reconstruction_mse(m, val_segs);
    out.fold_val_mse.push_back(report.val_mse);
    if (report.val_mse < best || f == 0) {
      best = report.val_mse;
      out.best = std::move(m);
      out.best_report = std::move(report);
      out.best_fold = static_cast<int>(f);
    }
  }
  return out;
}

std::vector<int> sample_labels(const recovery::NhaRecoveryModel& model, const std::vector<Subtrajectory>& segs) {
  if (!model.config().per_step) return recovery::expand_to_samples(segs, model.predict_modes(segs));
  std::vector<int> out;
  for (const auto& s : segs) {
    recovery::Matrix rows(static_cast<Eigen::Index>(s.size()), static_cast<Eigen::Index>(s.states.front().size()));
    for (std::size_t i = 0; i < s.size(); ++i) rows.row(static_cast<Eigen::Index>(i)) = s.states[i].transpose();
    const auto l = model.predict_state_modes(rows);
    out.insert(out.end(), l.begin(), l.end());
  }
  return out;
}

}  // namespace hal::experiment
