#pragma once

#include <map>
#include <vector>

namespace hal::metrics {

struct VMeasure {
  double homogeneity = 1.0;
  double completeness = 1.0;
  double v = 1.0;
};

/// Natural-log entropies. Predicted noise labels (-1) are pooled into one
/// extra cluster, so noise counts against homogeneity.
[[nodiscard]] VMeasure v_measure_scores(const std::vector<int>& truth, const std::vector<int>& pred);
[[nodiscard]] double v_measure(const std::vector<int>& truth, const std::vector<int>& pred);

struct MajorityMapping {
  std::map<int, int> cluster_to_class;
  double accuracy = 0.0;
};

/// Maps each predicted cluster to its most frequent true class and scores the
/// resulting per-sample accuracy. Noise (-1) is always counted as wrong.
[[nodiscard]] MajorityMapping majority_vote_accuracy(const std::vector<int>& truth, const std::vector<int>& pred);

}  // namespace hal::metrics
