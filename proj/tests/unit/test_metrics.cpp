#include "hal/metrics.hpp"
#include "hal/random.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <map>

namespace {

using namespace hal;

/// Contingency-table entropies computed from scratch.
metrics::VMeasure brute_force(const std::vector<int>& truth, const std::vector<int>& pred) {
  const double n = static_cast<double>(truth.size());
  std::map<std::pair<int, int>, double> joint;
  std::map<int, double> ct, cp;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    joint[{truth[i], pred[i]}] += 1;
    ct[truth[i]] += 1;
    cp[pred[i]] += 1;
  }
  double h_c = 0, h_k = 0, h_c_k = 0, h_k_c = 0;
  for (auto& [c, v] : ct) h_c -= v / n * std::log(v / n);
  for (auto& [k, v] : cp) h_k -= v / n * std::log(v / n);
  for (auto& [ck, v] : joint) {
    h_c_k -= v / n * std::log(v / cp[ck.second]);
    h_k_c -= v / n * std::log(v / ct[ck.first]);
  }
  metrics::VMeasure out;
  out.homogeneity = h_c == 0 ? 1.0 : 1.0 - h_c_k / h_c;
  out.completeness = h_k == 0 ? 1.0 : 1.0 - h_k_c / h_k;
  out.v = out.homogeneity + out.completeness == 0
              ? 0.0
              : 2 * out.homogeneity * out.completeness / (out.homogeneity + out.completeness);
  return out;
}

TEST(VMeasure, MatchesBruteForce) {
  Rng rng = make_rng(1);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 1 + static_cast<int>(uniform_index(rng, 60));
    const int kc = 1 + static_cast<int>(uniform_index(rng, 5));
    const int kp = 1 + static_cast<int>(uniform_index(rng, 6));
    std::vector<int> t(static_cast<std::size_t>(n)), p(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      t[static_cast<std::size_t>(i)] = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(kc)));
      p[static_cast<std::size_t>(i)] = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(kp)));
    }
    const auto got = metrics::v_measure_scores(t, p);
    const auto ref = brute_force(t, p);
    EXPECT_NEAR(got.homogeneity, ref.homogeneity, 1e-12);
    EXPECT_NEAR(got.completeness, ref.completeness, 1e-12);
    EXPECT_NEAR(got.v, ref.v, 1e-12);
  }
}

TEST(VMeasure, KnownValues) {
  EXPECT_DOUBLE_EQ(metrics::v_measure({0, 0, 1, 1}, {5, 5, 2, 2}), 1.0);
  EXPECT_NEAR(metrics::v_measure({0, 0, 1, 1}, {0, 1, 0, 1}), 0.0, 1e-15);
  // Splitting one class gives perfect homogeneity and imperfect completeness.
  const auto s = metrics::v_measure_scores({0, 0, 1, 1}, {0, 1, 2, 2});
  EXPECT_DOUBLE_EQ(s.homogeneity, 1.0);
  EXPECT_NEAR(s.completeness, 2.0 / 3.0, 1e-12);
}

TEST(VMeasure, SymmetricInArguments) {
  const std::vector<int> a{0, 0, 1, 2, 2, 2}, b{1, 0, 0, 1, 1, 1};
  EXPECT_NEAR(metrics::v_measure(a, b), metrics::v_measure(b, a), 1e-15);
}

TEST(VMeasure, NoiseIsPooled) {
  const std::vector<int> truth{0, 0, 1, 1};
  EXPECT_NEAR(metrics::v_measure(truth, {-1, -1, 0, 0}), 1.0, 1e-15);
  EXPECT_LT(metrics::v_measure(truth, {-1, 0, -1, 0}), 1e-12);
}

TEST(VMeasure, LengthMismatchThrows) { EXPECT_ANY_THROW((void)metrics::v_measure({0, 1}, {0})); }

TEST(MajorityVote, MapsClustersToClasses) {
  const auto m = metrics::majority_vote_accuracy({0, 0, 0, 1, 1, 2}, {3, 3, 1, 1, 1, 1});
  EXPECT_EQ(m.cluster_to_class.at(3), 0);
  EXPECT_EQ(m.cluster_to_class.at(1), 1);
  EXPECT_NEAR(m.accuracy, 4.0 / 6.0, 1e-15);
  EXPECT_NEAR(metrics::majority_vote_accuracy({0, 1}, {-1, 0}).accuracy, 0.5, 1e-15);
}

}  // namespace
