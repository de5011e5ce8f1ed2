#include "hal/sampling.hpp"

#include "hal/error.hpp"

#include <cmath>

namespace hal::nn {

void validate_distribution(const Eigen::VectorXd& probs) {
  if (probs.size() == 0) throw Error(ErrorCode::InvalidDistribution, "empty distribution");
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    if (!std::isfinite(probs[i]) || probs[i] < 0.0) {
      throw Error(ErrorCode::InvalidDistribution, "probability " + std::to_string(i) + " is negative or not finite");
    }
  }
  if (std::abs(probs.sum() - 1.0) > 1e-6) {
    throw Error(ErrorCode::InvalidDistribution, "probabilities sum to " + std::to_string(probs.sum()));
  }
}

int sample_categorical(const Eigen::Ref<const Eigen::VectorXd>& probs, Rng& rng) {
  const double u = uniform01(rng) * probs.sum();
  double acc = 0.0;
  int last = 0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    acc += probs[i];
    last = static_cast<int>(i);
    if (u < acc) return last;
  }
  return last;
}

CategoricalLatent straight_through_sample(const Eigen::VectorXd& probs, Rng& rng) {
  validate_distribution(probs);
  CategoricalLatent out;
  out.probs = probs;
  out.index = sample_categorical(probs, rng);
  out.one_hot = Eigen::VectorXd::Zero(probs.size());
  out.one_hot[out.index] = 1.0;
  return out;
}

StraightThroughBatch straight_through_sample(Var probs, Rng& rng) {
  const Matrix& p = probs.value();
  StraightThroughBatch out;
  Matrix hot = Matrix::Zero(p.rows(), p.cols());
  out.indices.resize(static_cast<std::size_t>(p.rows()));
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    const Eigen::VectorXd row = p.row(r).transpose();
    validate_distribution(row);
    const int k = sample_categorical(row, rng);
    out.indices[static_cast<std::size_t>(r)] = k;
    hot(r, k) = 1.0;
  }
  out.z = straight_through(probs, std::move(hot));
  return out;
}

Var gaussian_reparam(Var mu, Var sigma, Rng& rng) {
  if (mu.rows() != sigma.rows() || mu.cols() != sigma.cols()) {
    throw Error(ErrorCode::ShapeMismatch, "gaussian_reparam: mu and sigma shapes differ");
  }
  const Matrix& s = sigma.value();
  for (Eigen::Index k = 0; k < s.size(); ++k) {
    if (!(s(k) > 0.0)) throw Error(ErrorCode::NonPositiveSigma, "sigma must be positive");
  }
  Matrix eps(mu.rows(), mu.cols());
  for (Eigen::Index k = 0; k < eps.size(); ++k) eps(k) = standard_normal(rng);
  return mu + sigma * mu.tape()->constant(std::move(eps));
}

}  // namespace hal::nn
