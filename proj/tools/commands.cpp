#include "commands.hpp"

#include "hal/checkpoint.hpp"
#include "hal/dataset_io.hpp"
#include "hal/error.hpp"
#include "hal/event_module.hpp"
#include "hal/experiment.hpp"
#include "hal/metrics.hpp"
#include "hal/reference_systems.hpp"
#include "hal/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <map>
#include <numeric>
#include <set>

namespace hal::cli {

namespace {

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  nn::write_text_file(path.string(), j.dump(2) + "\n");
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::ofstream open_csv(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw Error(ErrorCode::Io, "cannot write " + path.string());
  os << std::setprecision(17);
  return os;
}

bool has_truth(const std::vector<Trajectory>& data) {
  return std::all_of(data.begin(), data.end(), [](const Trajectory& t) { return t.modes.has_value(); });
}

std::vector<std::string> all_ids(const std::vector<Trajectory>& data) {
  std::vector<std::string> ids;
  for (const auto& t : data) ids.push_back(t.id);
  return ids;
}

std::vector<std::string> cv_ids(const experiment::Split& split) {
  std::vector<std::string> ids;
  for (const auto& f : split.folds) ids.insert(ids.end(), f.begin(), f.end());
  return ids;
}

recovery::Matrix stack(const std::vector<Subtrajectory>& segs) {
  std::size_t n = 0;
  for (const auto& s : segs) n += s.size();
  recovery::Matrix out(static_cast<Eigen::Index>(n), segs.empty() ? 0 : segs.front().states.front().size());
  Eigen::Index r = 0;
  for (const auto& s : segs) {
    for (const auto& x : s.states) out.row(r++) = x.transpose();
  }
  return out;
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? std::numeric_limits<double>::quiet_NaN()
                   : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

std::vector<Subtrajectory> load_segments(const fs::path& path, const std::vector<Trajectory>& data) {
  if (!fs::exists(path)) throw Error(ErrorCode::Io, "segment file " + path.string() + " not found; run segment first");
  auto segs = io::read_segments(path, data);
  if (segs.empty()) throw Error(ErrorCode::Schema, path.string() + " holds no segments");
  return segs;
}

/// Parent trajectories relabeled from segment labels: one mode per sample and
/// an event time at every segment start after the first.
std::vector<Trajectory> labeled_parents(const std::vector<Trajectory>& data, const std::vector<Subtrajectory>& segs) {
  std::map<std::string, std::vector<const Subtrajectory*>> by_parent;
  for (const auto& s : segs) by_parent[s.parent_id].push_back(&s);
  std::vector<Trajectory> out;
  for (const auto& t : data) {
    const auto it = by_parent.find(t.id);
    if (it == by_parent.end()) continue;
    auto parts = it->second;
    std::sort(parts.begin(), parts.end(),
              [](const Subtrajectory* a, const Subtrajectory* b) { return a->start_idx < b->start_idx; });
    Trajectory r;
    r.id = t.id;
    r.modes.emplace();
    r.event_times.emplace();
    for (std::size_t k = 0; k < parts.size(); ++k) {
      const auto* s = parts[k];
      r.times.insert(r.times.end(), s->times.begin(), s->times.end());
      r.states.insert(r.states.end(), s->states.begin(), s->states.end());
      r.modes->insert(r.modes->end(), s->size(), s->recovered_mode.value_or(ModeId{0}));
      if (k > 0) r.event_times->push_back(s->times.front());
    }
    out.push_back(std::move(r));
  }
  return out;
}

json dwell_json(const events::DwellStatistics& d, double total_time) {
  json modes = json::object();
  for (const auto& [z, mean] : d.mean_dwell) {
    modes[std::to_string(z)] = {{"mean_dwell", mean}, {"count", d.dwell_count.at(z)}};
  }
  json edges = json::object();
  for (const auto& [e, n] : d.edge_count) {
    edges[events::edge_key(e)] = {{"count", n}, {"rate", total_time > 0.0 ? n / total_time : 0.0}};
  }
  return {{"modes", modes}, {"edges", edges}, {"total_time", total_time}};
}

}  // namespace

fs::path default_segments_path(const fs::path& dataset) {
  return dataset.parent_path() / (dataset.stem().string() + ".segments.jsonl");
}

int cmd_simulate(const ExperimentConfig& c, const SimulateArgs& args) {
  experiment::SimulationSummary summary;
  const auto data = experiment::simulate_dataset(c.system, c.n_traj, c.horizon, c.seed, c.solver, &summary);
  const fs::path out = args.out.empty() ? c.output_dir / "dataset.jsonl" : args.out;
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  io::write_dataset(out, data);
  int total = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::cout << data[i].id << " samples=" << data[i].size() << " events=" << summary.events_per_trajectory[i]
              << " modes_visited=" << summary.modes_visited[i] << '\n';
    total += summary.events_per_trajectory[i];
  }
  std::cout << "wrote " << data.size() << " trajectories with " << total << " events to " << out.string() << '\n';
  return 0;
}

int cmd_segment(const ExperimentConfig& c, const SegmentArgs& args) {
  const auto data = io::read_dataset(args.dataset);
  auto segs = segment_dataset(data, c.threshold);
  std::cout << "segmented " << data.size() << " trajectories into " << segs.size() << " segments";
  if (c.corrupt_p > 0.0) {
    const auto before = segs.size();
    segs = corrupt_segmentation(segs, data, c.corrupt_p, c.seed);
    std::cout << "; corrupted cuts with p=" << c.corrupt_p << " (seed " << c.seed << "), " << before << " -> "
              << segs.size() << " segments";
  }
  std::cout << '\n';
  const fs::path out = args.out.empty() ? default_segments_path(args.dataset) : args.out;
  io::write_segments(out, segs);
  std::cout << "wrote " << out.string() << '\n';
  return 0;
}

int cmd_recover(const ExperimentConfig& c, const RecoverArgs& args) {
  const auto data = io::read_dataset(args.dataset);
  const fs::path seg_path = args.segments.empty() ? default_segments_path(args.dataset) : args.segments;
  auto segs = load_segments(seg_path, data);
  const int state_dim = static_cast<int>(data.front().state_dim());
  const bool truth_known = has_truth(data);
  const auto truth = truth_known ? recovery::true_sample_modes(segs, data) : std::vector<int>{};

  const bool clustering = !c.baseline.empty() && experiment::is_clustering(experiment::baseline_from_string(c.baseline));
  const auto method = c.baseline.empty() ? std::string("nha") : c.baseline;
  const auto split = experiment::split_trajectories(data, clustering ? 1 : c.folds, clustering ? 0 : c.n_test, c.seed);
  const auto test_segs = experiment::segments_of(segs, split.test_ids);

  json runs = json::array();
  std::vector<double> vms;
  std::vector<int> best_labels;
  std::optional<recovery::NhaRecoveryModel> best_model;
  double best_val = std::numeric_limits<double>::infinity();
  bool degenerate = false;
  for (int s = 0; s < std::max(1, c.n_seeds); ++s) {
    const std::uint64_t seed = c.seed + static_cast<std::uint64_t>(s);
    json run = {{"seed", seed}};
    std::vector<int> seg_labels;
    std::vector<int> sample_labels;
    if (clustering) {
      seg_labels = experiment::cluster_segments(segs, experiment::baseline_from_string(c.baseline), c.model.n_modes,
                                                c.eps, c.min_pts, seed);
      sample_labels = recovery::expand_to_samples(segs, seg_labels);
      if (s == 0) best_labels = seg_labels;
    } else {
      const auto mc =
          c.baseline.empty() ? c.model : experiment::baseline_model(experiment::baseline_from_string(c.baseline), c.model);
      auto tc = c.train;
      tc.seed = seed;
      auto cv = experiment::cross_validate(segs, split, mc, tc, state_dim);
      if (c.prune_threshold > 0.0 && cv.best.has_encoder()) {
        const auto train_segs = experiment::segments_of(segs, cv_ids(split));
        const auto labels = cv.best.predict_modes(train_segs);
        const std::set<int> used(labels.begin(), labels.end());
        const auto pr = recovery::prune_modes(cv.best, stack(train_segs), c.prune_threshold,
                                              std::vector<int>(used.begin(), used.end()));
        run["modes_after_pruning"] = pr.n_modes_after;
      }
      seg_labels = cv.best.predict_modes(segs);
      sample_labels = experiment::sample_labels(cv.best, segs);
      const double val = mean_of(cv.fold_val_mse);
      run["fold_val_mse"] = cv.fold_val_mse;
      run["best_fold"] = cv.best_fold;
      run["train_mse"] = cv.best_report.train_mse;
      run["test_mse"] = test_segs.empty() ? json(nullptr) : json(recovery::reconstruction_mse(cv.best, test_segs));
      if (val < best_val || s == 0) {
        best_val = val;
        best_labels = seg_labels;
        best_model = std::move(cv.best);
      }
    }
    std::map<int, int> sizes;
    for (int l : seg_labels) ++sizes[l];
    json sizes_json = json::object();
    for (const auto& [l, n] : sizes) sizes_json[std::to_string(l)] = n;
    run["cluster_sizes"] = sizes_json;
    if (truth_known) {
      const auto vm = metrics::v_measure_scores(truth, sample_labels);
      const auto acc = metrics::majority_vote_accuracy(truth, sample_labels);
      run["v_measure"] = vm.v;
      run["homogeneity"] = vm.homogeneity;
      run["completeness"] = vm.completeness;
      run["majority_accuracy"] = acc.accuracy;
      vms.push_back(vm.v);
      const std::set<int> classes(truth.begin(), truth.end());
      if (classes.size() < 2) degenerate = true;
    }
    if (sizes.size() < 2) degenerate = true;
    runs.push_back(std::move(run));
  }

  // Baseline rows never overwrite the NHA labels consumed by later stages.
  const std::string suffix = c.baseline.empty() ? "" : "." + c.baseline;
  for (std::size_t i = 0; i < segs.size(); ++i) segs[i].recovered_mode = ModeId(best_labels[i]);
  fs::create_directories(c.output_dir);
  io::write_segments(c.output_dir / ("labels" + suffix + ".segments.jsonl"), segs);
  {
    auto os = open_csv(c.output_dir / ("labels" + suffix + ".csv"));
    const auto seg_truth = truth_known ? recovery::true_segment_modes(segs, data) : std::vector<int>{};
    os << "parent_id,start_idx,end_idx,label" << (truth_known ? ",true_mode" : "") << '\n';
    for (std::size_t i = 0; i < segs.size(); ++i) {
      os << segs[i].parent_id << ',' << segs[i].start_idx << ',' << segs[i].end_idx << ',' << best_labels[i];
      if (truth_known) os << ',' << seg_truth[i];
      os << '\n';
    }
  }
  if (best_model) {
    nn::write_text_file((c.output_dir / ("model" + suffix + ".json")).string(), recovery::model_to_json(*best_model));
  }

  json report = {{"method", method},
                 {"n_modes", c.model.n_modes},
                 {"n_segments", segs.size()},
                 {"n_trajectories", data.size()},
                 {"test_ids", split.test_ids},
                 {"runs", runs},
                 {"degenerate", degenerate},
                 {"v_measure_mean", truth_known ? number_or_null(mean_of(vms)) : json(nullptr)},
                 {"v_measure_std", truth_known ? number_or_null(std_of(vms)) : json(nullptr)}};
  write_json(c.output_dir / ("recovery_report" + suffix + ".json"), report);
  std::cout << method << " m=" << c.model.n_modes;
  if (truth_known) std::cout << " v-measure " << mean_of(vms) << " +- " << std_of(vms);
  if (degenerate) std::cout << " (degenerate clustering)";
  std::cout << '\n';
  return 0;
}

int cmd_train_events(const ExperimentConfig& c, const TrainEventsArgs& args) {
  const auto data = io::read_dataset(args.dataset);
  fs::path seg_path = args.segments;
  if (seg_path.empty()) {
    seg_path = fs::exists(c.output_dir / "labels.segments.jsonl") ? c.output_dir / "labels.segments.jsonl"
                                                                   : default_segments_path(args.dataset);
  }
  auto segs = load_segments(seg_path, data);
  const bool labeled = std::all_of(segs.begin(), segs.end(), [](const Subtrajectory& s) { return s.recovered_mode; });
  if (args.use_truth || !labeled) {
    if (!has_truth(data)) throw Error(ErrorCode::Schema, "segments carry no recovered modes and the dataset no ground truth");
    if (!args.use_truth) std::cerr << "segments carry no recovered modes; using ground-truth labels\n";
    const auto modes = recovery::true_segment_modes(segs, data);
    for (std::size_t i = 0; i < segs.size(); ++i) segs[i].recovered_mode = ModeId(modes[i]);
  }
  int n_modes = c.model.n_modes;
  for (const auto& s : segs) {
    if (s.recovered_mode->index < 0) throw Error(ErrorCode::Schema, "segment labels must be non-negative mode ids");
    n_modes = std::max(n_modes, s.recovered_mode->index + 1);
  }

  const auto split = experiment::split_trajectories(data, 1, c.n_test, c.seed);
  auto sup_ids = cv_ids(split);
  if (c.n_supervision > 0 && static_cast<std::size_t>(c.n_supervision) < sup_ids.size()) {
    sup_ids.resize(static_cast<std::size_t>(c.n_supervision));
  }
  const auto train = recovery::collect_event_supervision(experiment::segments_of(segs, sup_ids));
  const auto test_ids = split.test_ids.empty() ? all_ids(data) : split.test_ids;
  const auto test = recovery::collect_event_supervision(experiment::segments_of(segs, test_ids));

  auto ec = c.events;
  ec.seed = c.seed;
  events::EventModule module(n_modes, static_cast<int>(data.front().state_dim()), ec);
  const auto train_eval = events::train_event_module(module, train);
  const auto test_eval = events::evaluate_event_module(module, test);

  fs::create_directories(c.output_dir);
  nn::write_text_file((c.output_dir / "events.json").string(), events::module_to_json(module));
  json metrics = {{"n_supervision", sup_ids.size()},
                  {"supervision_ids", sup_ids},
                  {"n_train_events", recovery::supervision_size(train)},
                  {"n_test_events", recovery::supervision_size(test)},
                  {"train", json::parse(events::evaluation_to_json(train_eval))},
                  {"test", json::parse(events::evaluation_to_json(test_eval))}};
  write_json(c.output_dir / "event_metrics.json", metrics);
  std::cout << "trained " << module.edges().size() << " edges on " << recovery::supervision_size(train)
            << " events from " << sup_ids.size() << " trajectories; test NLL " << test_eval.pooled_nll
            << ", jump MSE " << test_eval.pooled_jump_mse << '\n';
  return 0;
}

int cmd_evaluate(const ExperimentConfig& c, const EvaluateArgs& args) {
  const auto model = recovery::model_from_json(nn::read_text_file(args.model.string()));
  const auto module = events::module_from_json(nn::read_text_file(args.events.string()));
  const auto data = io::read_dataset(args.dataset);
  fs::path seg_path = args.segments;
  if (seg_path.empty()) {
    seg_path = fs::exists(c.output_dir / "labels.segments.jsonl") ? c.output_dir / "labels.segments.jsonl"
                                                                   : default_segments_path(args.dataset);
  }
  auto segs = load_segments(seg_path, data);
  if (!std::all_of(segs.begin(), segs.end(), [](const Subtrajectory& s) { return s.recovered_mode; })) {
    const auto labels = model.predict_modes(segs);
    for (std::size_t i = 0; i < segs.size(); ++i) segs[i].recovered_mode = ModeId(labels[i]);
  }

  const auto split = experiment::split_trajectories(data, 1, c.n_test, c.seed);
  const auto test_ids = split.test_ids.empty() ? all_ids(data) : split.test_ids;
  const auto test_segs = experiment::segments_of(segs, test_ids);
  std::vector<Trajectory> test_data;
  for (const auto& t : data) {
    if (std::find(test_ids.begin(), test_ids.end(), t.id) != test_ids.end()) test_data.push_back(t);
  }
  const auto observed = labeled_parents(test_data, test_segs);

  std::vector<Trajectory> generated;
  double total_time = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    const auto& t = observed[i];
    const double horizon = t.times.back() - t.times.front();
    total_time += horizon;
    events::NhaSimConfig sim;
    if (c.solver.output_dt) sim.dt = *c.solver.output_dt;
    Rng rng = make_rng(c.seed, 100 + i);
    auto sol = events::simulate_nha(model, module, t.states.front(), t.modes->front().index, t.times.front(), horizon,
                                    rng, sim);
    generated.push_back(std::move(sol.trajectory));
  }
  const auto data_stats = events::dwell_statistics(observed);
  const auto model_stats = events::dwell_statistics(generated);
  json out = {{"n_trajectories", observed.size()},
              {"test_ids", test_ids},
              {"reconstruction_mse", test_segs.empty() ? json(nullptr)
                                                       : number_or_null(recovery::reconstruction_mse(model, test_segs))},
              {"data", dwell_json(data_stats, total_time)},
              {"model", dwell_json(model_stats, total_time)}};
  const fs::path path = args.out.empty() ? c.output_dir / "evaluation.json" : args.out;
  write_json(path, out);
  std::cout << "evaluated " << observed.size() << " held-out trajectories; wrote " << path.string() << '\n';
  return 0;
}

int cmd_pathology(const ExperimentConfig& c, const PathologyArgs& args) {
  systems::ToyParams params{args.a, args.b, args.c, args.tau};
  if (args.n_tau < 1 || args.n_samples < 1) throw Error(ErrorCode::InvalidArgument, "grid sizes must be positive");
  fs::create_directories(c.output_dir);
  auto csv = open_csv(c.output_dir / "pathology.csv");
  csv << "tau_estimate,t,true_mode,estimated_mode,grad_b_true,grad_b_estimated,flag\n";
  json runs = json::array();
  for (int k = 0; k < args.n_tau; ++k) {
    const double est = args.n_tau == 1 ? args.tau_min
                                       : args.tau_min + (args.tau_max - args.tau_min) * k / (args.n_tau - 1);
    std::vector<double> times;
    for (int i = 0; i < args.n_samples; ++i) {
      const double t = (i + 0.5) / args.n_samples;
      if (t != params.tau && t != est) times.push_back(t);
    }
    const auto r = systems::pathology_report(params, est, times, args.x0);
    for (const auto& s : r.samples) {
      csv << est << ',' << s.t << ',' << s.true_mode << ',' << s.estimated_mode << ',' << s.grad_b_true << ','
          << s.grad_b_estimated << ',' << systems::to_string(s.flag) << '\n';
    }
    runs.push_back({{"tau_estimate", est},
                    {"n_samples", r.samples.size()},
                    {"wrongly_zero", r.wrongly_zero},
                    {"wrongly_nonzero", r.wrongly_nonzero}});
    std::cout << "tau_estimate=" << est << " wrongly_zero=" << r.wrongly_zero
              << " wrongly_nonzero=" << r.wrongly_nonzero << '\n';
  }
  json report = {{"params", {{"a", args.a}, {"b", args.b}, {"c", args.c}, {"tau", args.tau}, {"x0", args.x0}}},
                 {"runs", runs}};
  write_json(c.output_dir / "pathology.json", report);
  return 0;
}

}  // namespace hal::cli
