#include "hal/clustering.hpp"

#include "hal/error.hpp"
#include "hal/random.hpp"

#include <algorithm>
#include <limits>
#include <map>

namespace hal::cluster {

namespace {

void check_k(const Points& points, int k) {
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "k must be at least 1");
  if (k > points.rows()) {
    throw Error(ErrorCode::InvalidArgument,
                "k = " + std::to_string(k) + " exceeds the number of points (" + std::to_string(points.rows()) + ")");
  }
}

int nearest(const Eigen::MatrixXd& centers, const Eigen::RowVectorXd& p, double* dist2) {
  int best = 0;
  double bd = std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < centers.rows(); ++c) {
    const double d = (centers.row(c) - p).squaredNorm();
    if (d < bd) {
      bd = d;
      best = static_cast<int>(c);
    }
  }
  if (dist2) *dist2 = bd;
  return best;
}

std::vector<int> relabel_by_appearance(const std::vector<int>& labels) {
  std::map<int, int> remap;
  std::vector<int> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == kNoise) {
      out[i] = kNoise;
      continue;
    }
    auto [it, inserted] = remap.try_emplace(labels[i], static_cast<int>(remap.size()));
    out[i] = it->second;
  }
  return out;
}

}  // namespace

KMeansResult kmeanspp(const Points& points, int k, std::uint64_t seed, int max_iter) {
  check_k(points, k);
  const Eigen::Index n = points.rows();
  Rng rng(seed);
  KMeansResult res;
  res.centers.resize(k, points.cols());
  res.centers.row(0) = points.row(static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::uint64_t>(n))));
  Eigen::VectorXd d2(n);
  for (Eigen::Index i = 0; i < n; ++i) d2[i] = (points.row(i) - res.centers.row(0)).squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = d2.sum();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      const double u = uniform01(rng) * total;
      double acc = 0.0;
      pick = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += d2[i];
        if (u < acc && d2[i] > 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::uint64_t>(n)));
    }
    res.centers.row(c) = points.row(pick);
    for (Eigen::Index i = 0; i < n; ++i) d2[i] = std::min(d2[i], (points.row(i) - res.centers.row(c)).squaredNorm());
  }

  res.labels.assign(static_cast<std::size_t>(n), -1);
  for (int it = 0; it < max_iter; ++it) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      const int l = nearest(res.centers, points.row(i), nullptr);
      if (l != res.labels[static_cast<std::size_t>(i)]) {
        res.labels[static_cast<std::size_t>(i)] = l;
        changed = true;
      }
    }
    res.iterations = it + 1;
    if (!changed) break;
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, points.cols());
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(k);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(res.labels[static_cast<std::size_t>(i)]) += points.row(i);
      counts[res.labels[static_cast<std::size_t>(i)]] += 1.0;
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0.0) {
        res.centers.row(c) = sums.row(c) / counts[c];
      } else {
        // Empty cluster: move it to the point farthest from its center.
        Eigen::Index far = 0;
        double fd = -1.0;
        for (Eigen::Index i = 0; i < n; ++i) {
          const double d = (points.row(i) - res.centers.row(res.labels[static_cast<std::size_t>(i)])).squaredNorm();
          if (d > fd) {
            fd = d;
            far = i;
          }
        }
        res.centers.row(c) = points.row(far);
      }
    }
  }
  res.inertia = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    res.inertia += (points.row(i) - res.centers.row(res.labels[static_cast<std::size_t>(i)])).squaredNorm();
  }
  return res;
}

KMeansResult kmeanspp_restarts(const Points& points, int k, std::uint64_t seed, int restarts) {
  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int r = 0; r < std::max(1, restarts); ++r) {
    auto res = kmeanspp(points, k, mix_seed(seed, static_cast<std::uint64_t>(r)));
    if (res.inertia < best.inertia) best = std::move(res);
  }
  return best;
}

double inertia(const Points& points, const std::vector<int>& labels) {
  if (labels.size() != static_cast<std::size_t>(points.rows())) {
    throw Error(ErrorCode::LengthMismatch, "labels and points differ in length");
  }
  std::map<int, std::pair<Eigen::RowVectorXd, double>> sums;
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    auto [it, inserted] =
        sums.try_emplace(labels[static_cast<std::size_t>(i)], Eigen::RowVectorXd::Zero(points.cols()), 0.0);
    it->second.first += points.row(i);
    it->second.second += 1.0;
  }
  double total = 0.0;
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    const auto& [s, c] = sums.at(labels[static_cast<std::size_t>(i)]);
    total += (points.row(i) - s / c).squaredNorm();
  }
  return total;
}

std::vector<int> hierarchical_cluster(const Points& points, int k) {
  check_k(points, k);
  const Eigen::Index n = points.rows();
  // Average linkage on a dense distance matrix with Lance-Williams updates.
  Eigen::MatrixXd dist(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) dist(i, j) = (points.row(i) - points.row(j)).norm();
  }
  std::vector<int> size(static_cast<std::size_t>(n), 1);
  std::vector<bool> alive(static_cast<std::size_t>(n), true);
  std::vector<int> owner(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) owner[static_cast<std::size_t>(i)] = static_cast<int>(i);

  for (Eigen::Index clusters = n; clusters > k; --clusters) {
    double best = std::numeric_limits<double>::infinity();
    Eigen::Index bi = -1, bj = -1;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!alive[static_cast<std::size_t>(i)]) continue;
      for (Eigen::Index j = i + 1; j < n; ++j) {
        if (!alive[static_cast<std::size_t>(j)]) continue;
        if (dist(i, j) < best) {
          best = dist(i, j);
          bi = i;
          bj = j;
        }
      }
    }
    const double si = size[static_cast<std::size_t>(bi)];
    const double sj = size[static_cast<std::size_t>(bj)];
    for (Eigen::Index m = 0; m < n; ++m) {
      if (!alive[static_cast<std::size_t>(m)] || m == bi || m == bj) continue;
      const double d = (si * dist(bi, m) + sj * dist(bj, m)) / (si + sj);
      dist(bi, m) = d;
      dist(m, bi) = d;
    }
    size[static_cast<std::size_t>(bi)] += size[static_cast<std::size_t>(bj)];
    alive[static_cast<std::size_t>(bj)] = false;
    for (auto& o : owner) {
      if (o == bj) o = static_cast<int>(bi);
    }
  }
  return relabel_by_appearance(owner);
}

std::vector<int> dbscan(const Points& points, double eps, int min_pts) {
  if (!(eps > 0.0)) throw Error(ErrorCode::InvalidArgument, "dbscan eps must be positive");
  if (min_pts < 1) throw Error(ErrorCode::InvalidArgument, "dbscan min_pts must be at least 1");
  const Eigen::Index n = points.rows();
  const double eps2 = eps * eps;
  std::vector<std::vector<Eigen::Index>> nbrs(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if ((points.row(i) - points.row(j)).squaredNorm() <= eps2) nbrs[static_cast<std::size_t>(i)].push_back(j);
    }
  }
  constexpr int kUnvisited = -2;
  std::vector<int> labels(static_cast<std::size_t>(n), kUnvisited);
  int cluster = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (labels[static_cast<std::size_t>(i)] != kUnvisited) continue;
    if (static_cast<int>(nbrs[static_cast<std::size_t>(i)].size()) < min_pts) {
      labels[static_cast<std::size_t>(i)] = kNoise;
      continue;
    }
    labels[static_cast<std::size_t>(i)] = cluster;
    std::vector<Eigen::Index> queue = nbrs[static_cast<std::size_t>(i)];
    for (std::size_t q = 0; q < queue.size(); ++q) {
      const auto j = static_cast<std::size_t>(queue[q]);
      if (labels[j] == kNoise) labels[j] = cluster;
      if (labels[j] != kUnvisited) continue;
      labels[j] = cluster;
      if (static_cast<int>(nbrs[j].size()) >= min_pts) {
        queue.insert(queue.end(), nbrs[j].begin(), nbrs[j].end());
      }
    }
    ++cluster;
  }
  return labels;
}

}  // namespace hal::cluster
