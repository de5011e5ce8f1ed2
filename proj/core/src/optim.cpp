#include "hal/optim.hpp"

#include "hal/error.hpp"

#include <cmath>

namespace hal::nn {

Adam::Adam(std::vector<ParamTensor*> params, AdamConfig config) : params_(std::move(params)), config_(config) {
  if (!(config_.lr > 0.0)) throw Error(ErrorCode::InvalidArgument, "Adam learning rate must be positive");
  for (auto* p : params_) {
    m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    if (p->grad.size() != p->value.size()) p->zero_grad();
  }
}

void Adam::step() {
  ++t_;
  const double t = static_cast<double>(t_);
  const double c1 = 1.0 - std::pow(config_.beta1, t);
  const double c2 = 1.0 - std::pow(config_.beta2, t);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = *params_[i];
    m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * p.grad;
    v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * p.grad.cwiseProduct(p.grad);
    p.value.array() -= config_.lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + config_.eps);
  }
}

void Adam::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

}  // namespace hal::nn
