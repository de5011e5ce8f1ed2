#pragma once

#include "hal/random.hpp"
#include "hal/tape.hpp"

#include <Eigen/Core>

#include <vector>

namespace hal::nn {

/// One-hot mode code with the distribution it was drawn from.
struct CategoricalLatent {
  Eigen::VectorXd probs;
  Eigen::VectorXd one_hot;
  int index = 0;
};

/// Throws InvalidDistribution on negative entries or |sum - 1| > 1e-6.
void validate_distribution(const Eigen::VectorXd& probs);

/// Inverse-CDF draw of a category.
[[nodiscard]] int sample_categorical(const Eigen::Ref<const Eigen::VectorXd>& probs, Rng& rng);

/// Draws a category from `probs` and returns its one-hot code.
[[nodiscard]] CategoricalLatent straight_through_sample(const Eigen::VectorXd& probs, Rng& rng);

struct StraightThroughBatch {
  Var z;                      ///< one-hot rows in the forward pass
  std::vector<int> indices;  ///< sampled category per row
};

/// Row-wise categorical draw; gradients flow to `probs` as if z were probs.
[[nodiscard]] StraightThroughBatch straight_through_sample(Var probs, Rng& rng);

/// mu + sigma * eps with eps ~ N(0, I); throws NonPositiveSigma.
[[nodiscard]] Var gaussian_reparam(Var mu, Var sigma, Rng& rng);

}  // namespace hal::nn
