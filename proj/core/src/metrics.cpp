#include "hal/metrics.hpp"

#include "hal/error.hpp"

#include <cmath>

namespace hal::metrics {

namespace {

double entropy(const std::map<int, double>& counts, double n) {
  double h = 0.0;
  for (const auto& [k, c] : counts) {
    if (c > 0.0) h -= (c / n) * std::log(c / n);
  }
  return h;
}

void check(const std::vector<int>& truth, const std::vector<int>& pred) {
  if (truth.size() != pred.size()) {
    throw Error(ErrorCode::LengthMismatch, "label vectors have lengths " + std::to_string(truth.size()) + " and " +
                                               std::to_string(pred.size()));
  }
  if (truth.empty()) throw Error(ErrorCode::LengthMismatch, "label vectors are empty");
}

}  // namespace

VMeasure v_measure_scores(const std::vector<int>& truth, const std::vector<int>& pred) {
  check(truth, pred);
  const double n = static_cast<double>(truth.size());
  std::map<int, double> nc, nk;
  std::map<std::pair<int, int>, double> joint;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    nc[truth[i]] += 1.0;
    nk[pred[i]] += 1.0;
    joint[{truth[i], pred[i]}] += 1.0;
  }
  const double hc = entropy(nc, n);
  const double hk = entropy(nk, n);
  double hc_given_k = 0.0, hk_given_c = 0.0;
  for (const auto& [ck, cnt] : joint) {
    hc_given_k -= (cnt / n) * std::log(cnt / nk[ck.second]);
    hk_given_c -= (cnt / n) * std::log(cnt / nc[ck.first]);
  }
  VMeasure out;
  out.homogeneity = hc == 0.0 ? 1.0 : 1.0 - hc_given_k / hc;
  out.completeness = hk == 0.0 ? 1.0 : 1.0 - hk_given_c / hk;
  const double s = out.homogeneity + out.completeness;
  out.v = s == 0.0 ? 0.0 : 2.0 * out.homogeneity * out.completeness / s;
  return out;
}

double v_measure(const std::vector<int>& truth, const std::vector<int>& pred) {
  return v_measure_scores(truth, pred).v;
}

MajorityMapping majority_vote_accuracy(const std::vector<int>& truth, const std::vector<int>& pred) {
  check(truth, pred);
  std::map<int, std::map<int, int>> table;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (pred[i] >= 0) ++table[pred[i]][truth[i]];
  }
  MajorityMapping out;
  for (const auto& [k, row] : table) {
    int best = row.begin()->first, bc = -1;
    for (const auto& [c, cnt] : row) {
      if (cnt > bc) {
        bc = cnt;
        best = c;
      }
    }
    out.cluster_to_class[k] = best;
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (pred[i] >= 0 && out.cluster_to_class.at(pred[i]) == truth[i]) ++hits;
  }
  out.accuracy = static_cast<double>(hits) / static_cast<double>(truth.size());
  return out;
}

}  // namespace hal::metrics
