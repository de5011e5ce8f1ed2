#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <vector>

namespace hal::cluster {

/// Points are rows.
using Points = Eigen::MatrixXd;

inline constexpr int kNoise = -1;

struct KMeansResult {
  std::vector<int> labels;
  Eigen::MatrixXd centers;
  double inertia = 0.0;
  int iterations = 0;
};

/// k-means++ seeding followed by Lloyd iterations (until labels settle or max_iter).
[[nodiscard]] KMeansResult kmeanspp(const Points& points, int k, std::uint64_t seed, int max_iter = 300);

/// Best of `restarts` independent kmeanspp runs by inertia.
[[nodiscard]] KMeansResult kmeanspp_restarts(const Points& points, int k, std::uint64_t seed, int restarts);

/// Sum of squared distances from each point to the mean of its cluster.
[[nodiscard]] double inertia(const Points& points, const std::vector<int>& labels);

/// Agglomerative average-linkage clustering cut at k clusters. Labels are
/// numbered by first appearance.
[[nodiscard]] std::vector<int> hierarchical_cluster(const Points& points, int k);

/// DBSCAN; noise points get kNoise.
[[nodiscard]] std::vector<int> dbscan(const Points& points, double eps, int min_pts);

}  // namespace hal::cluster
