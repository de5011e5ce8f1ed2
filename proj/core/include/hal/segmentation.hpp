#pragma once

#include "hal/types.hpp"

#include <cstdint>
#include <vector>

namespace hal {

/// Euclidean norm of each consecutive finite difference divided by the time
/// step. Duplicated timestamps yield +infinity.
[[nodiscard]] std::vector<double> finite_difference_norms(const Trajectory& traj);

/// 5x the median finite-difference norm (ignoring duplicated timestamps).
[[nodiscard]] double default_segmentation_threshold(const Trajectory& traj);

/// Cuts between samples i and i+1 whenever the finite-difference norm exceeds
/// `threshold`; duplicated timestamps are always cut. The returned slices are a
/// disjoint, ordered cover of `traj`.
[[nodiscard]] std::vector<Subtrajectory> finite_difference_segment(const Trajectory& traj, double threshold);

/// Start indices of every slice after the first, per parent, in order.
[[nodiscard]] std::vector<std::size_t> cut_indices(const std::vector<Subtrajectory>& segments_of_one_parent);

/// Rebuilds the cover of `traj` from sorted internal cut indices.
[[nodiscard]] std::vector<Subtrajectory> segments_from_cuts(const Trajectory& traj,
                                                            const std::vector<std::size_t>& cuts);

/// Each internal cut is, with probability p, moved left or right by an integer
/// drawn uniformly from [1, 10]. Cuts are clamped to the parent range, sorted
/// and deduplicated, so slices swallowed by a neighbour disappear.
/// `segments` may hold several parents; `parents` supplies their samples.
[[nodiscard]] std::vector<Subtrajectory> corrupt_segmentation(const std::vector<Subtrajectory>& segments,
                                                              const std::vector<Trajectory>& parents, double p,
                                                              std::uint64_t rng_seed);

/// Segments every trajectory of a dataset with the same threshold (or the
/// per-trajectory default when threshold <= 0).
[[nodiscard]] std::vector<Subtrajectory> segment_dataset(const std::vector<Trajectory>& dataset, double threshold);

}  // namespace hal
