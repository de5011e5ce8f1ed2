#include "hal/segmentation.hpp"

#include "hal/error.hpp"
#include "hal/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

namespace hal {

namespace {

void check_segmentable(const Trajectory& traj) {
  if (traj.size() < 2) throw Error(ErrorCode::EmptyTrajectory, "trajectory '" + traj.id + "' has fewer than 2 samples");
  if (traj.states.size() != traj.times.size()) {
    throw Error(ErrorCode::LengthMismatch, "times and states differ in length");
  }
  for (std::size_t i = 1; i < traj.size(); ++i) {
    if (!(traj.times[i] >= traj.times[i - 1])) {
      throw Error(ErrorCode::NonMonotoneTime, "time decreases at sample " + std::to_string(i));
    }
  }
}

}  // namespace

std::vector<double> finite_difference_norms(const Trajectory& traj) {
  check_segmentable(traj);
  std::vector<double> out(traj.size() - 1);
  for (std::size_t i = 0; i + 1 < traj.size(); ++i) {
    const double dt = traj.times[i + 1] - traj.times[i];
    out[i] = dt > 0.0 ? (traj.states[i + 1] - traj.states[i]).norm() / dt : std::numeric_limits<double>::infinity();
  }
  return out;
}

double default_segmentation_threshold(const Trajectory& traj) {
  auto fd = finite_difference_norms(traj);
  std::erase_if(fd, [](double v) { return !std::isfinite(v); });
  if (fd.empty()) return 1.0;
  const auto mid = fd.begin() + static_cast<std::ptrdiff_t>(fd.size() / 2);
  std::nth_element(fd.begin(), mid, fd.end());
  const double median = *mid;
  return median > 0.0 ? 5.0 * median : 1.0;
}

std::vector<Subtrajectory> segments_from_cuts(const Trajectory& traj, const std::vector<std::size_t>& cuts) {
  std::vector<Subtrajectory> out;
  std::size_t begin = 0;
  for (std::size_t c : cuts) {
    if (c <= begin || c >= traj.size()) continue;
    out.push_back(make_subtrajectory(traj, begin, c));
    begin = c;
  }
  out.push_back(make_subtrajectory(traj, begin, traj.size()));
  return out;
}

std::vector<Subtrajectory> finite_difference_segment(const Trajectory& traj, double threshold) {
  if (!(threshold > 0.0)) throw Error(ErrorCode::InvalidArgument, "segmentation threshold must be positive");
  const auto fd = finite_difference_norms(traj);
  std::vector<std::size_t> cuts;
  for (std::size_t i = 0; i < fd.size(); ++i) {
    if (fd[i] > threshold) cuts.push_back(i + 1);
  }
  return segments_from_cuts(traj, cuts);
}

std::vector<std::size_t> cut_indices(const std::vector<Subtrajectory>& segments_of_one_parent) {
  std::vector<std::size_t> cuts;
  for (std::size_t i = 1; i < segments_of_one_parent.size(); ++i) cuts.push_back(segments_of_one_parent[i].start_idx);
  return cuts;
}

std::vector<Subtrajectory> corrupt_segmentation(const std::vector<Subtrajectory>& segments,
                                                const std::vector<Trajectory>& parents, double p,
                                                std::uint64_t rng_seed) {
  if (p < 0.0 || p > 1.0) throw Error(ErrorCode::InvalidArgument, "corruption probability outside [0, 1]");
  std::unordered_map<std::string, const Trajectory*> by_id;
  for (const auto& t : parents) by_id.emplace(t.id, &t);

  // Group by parent in order of first appearance.
  std::vector<std::string> order;
  std::unordered_map<std::string, std::vector<Subtrajectory>> groups;
  for (const auto& s : segments) {
    auto [it, inserted] = groups.try_emplace(s.parent_id);
    if (inserted) order.push_back(s.parent_id);
    it->second.push_back(s);
  }

  Rng rng = make_rng(rng_seed);
  std::vector<Subtrajectory> out;
  for (const auto& id : order) {
    auto& group = groups[id];
    std::sort(group.begin(), group.end(),
              [](const Subtrajectory& a, const Subtrajectory& b) { return a.start_idx < b.start_idx; });
    const auto parent_it = by_id.find(id);
    if (parent_it == by_id.end()) throw Error(ErrorCode::InvalidArgument, "unknown parent trajectory '" + id + "'");
    const Trajectory& parent = *parent_it->second;

    auto cuts = cut_indices(group);
    bool changed = false;
    const auto last = static_cast<long long>(parent.size()) - 1;
    for (auto& c : cuts) {
      const double u = uniform01(rng);
      const bool right = uniform01(rng) < 0.5;
      const auto shift = static_cast<long long>(1 + uniform_index(rng, 10));
      if (u >= p) continue;
      long long moved = static_cast<long long>(c) + (right ? shift : -shift);
      moved = std::clamp<long long>(moved, 1, std::max<long long>(1, last));
      c = static_cast<std::size_t>(moved);
      changed = true;
    }
    if (!changed) {
      out.insert(out.end(), group.begin(), group.end());
      continue;
    }
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    auto rebuilt = segments_from_cuts(parent, cuts);
    out.insert(out.end(), rebuilt.begin(), rebuilt.end());
  }
  return out;
}

std::vector<Subtrajectory> segment_dataset(const std::vector<Trajectory>& dataset, double threshold) {
  std::vector<Subtrajectory> out;
  for (const auto& traj : dataset) {
    const double thr = threshold > 0.0 ? threshold : default_segmentation_threshold(traj);
    auto segs = finite_difference_segment(traj, thr);
    out.insert(out.end(), std::make_move_iterator(segs.begin()), std::make_move_iterator(segs.end()));
  }
  return out;
}

}  // namespace hal
