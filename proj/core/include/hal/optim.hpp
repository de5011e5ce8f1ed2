#pragma once

#include "hal/tape.hpp"

#include <cstddef>
#include <vector>

namespace hal::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction over a fixed parameter set.
class Adam {
 public:
  Adam() = default;
  Adam(std::vector<ParamTensor*> params, AdamConfig config);

  void step();
  void zero_grad();

  [[nodiscard]] std::size_t step_count() const noexcept { return t_; }
  [[nodiscard]] const AdamConfig& config() const noexcept { return config_; }
  void set_lr(double lr) noexcept { config_.lr = lr; }

 private:
  std::vector<ParamTensor*> params_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  AdamConfig config_;
  std::size_t t_ = 0;
};

}  // namespace hal::nn
