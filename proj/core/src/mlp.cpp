#include "hal/mlp.hpp"

#include "hal/error.hpp"

#include <cmath>

namespace hal::nn {

const char* to_string(Activation a) noexcept {
  switch (a) {
    case Activation::None: return "none";
    case Activation::ReLU: return "relu";
    case Activation::Softplus: return "softplus";
    case Activation::Tanh: return "tanh";
    case Activation::SiLU: return "silu";
  }
  return "none";
}

Activation activation_from_string(const std::string& s) {
  if (s == "none" || s == "identity") return Activation::None;
  if (s == "relu") return Activation::ReLU;
  if (s == "softplus") return Activation::Softplus;
  if (s == "tanh") return Activation::Tanh;
  if (s == "silu" || s == "swish") return Activation::SiLU;
  throw Error(ErrorCode::InvalidArgument, "unknown activation '" + s + "'");
}

void MlpSpec::validate() const {
  if (layer_dims.size() < 2) throw Error(ErrorCode::InvalidArgument, "an MLP needs at least input and output dims");
  for (int d : layer_dims) {
    if (d <= 0) throw Error(ErrorCode::InvalidArgument, "layer dims must be positive");
  }
  const std::size_t hidden = n_layers() - 1;
  if (!hidden_activations.empty() && hidden_activations.size() != hidden) {
    throw Error(ErrorCode::InvalidArgument, "hidden_activations needs one entry per hidden layer");
  }
  if (!dropout.empty() && dropout.size() != hidden) {
    throw Error(ErrorCode::InvalidArgument, "dropout needs one rate per hidden layer");
  }
  for (double r : dropout) {
    if (!(r >= 0.0 && r < 1.0)) throw Error(ErrorCode::InvalidArgument, "dropout rate must lie in [0, 1)");
  }
}

Mlp::Mlp(MlpSpec spec, Rng& rng) : spec_(std::move(spec)) {
  spec_.validate();
  for (std::size_t i = 0; i < spec_.n_layers(); ++i) {
    const int in = spec_.layer_dims[i];
    const int out = spec_.layer_dims[i + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    Matrix w(in, out);
    Matrix b(1, out);
    for (Eigen::Index k = 0; k < w.size(); ++k) w(k) = bound * (2.0 * uniform01(rng) - 1.0);
    for (Eigen::Index k = 0; k < b.size(); ++k) b(k) = bound * (2.0 * uniform01(rng) - 1.0);
    params_.emplace_back("W" + std::to_string(i), std::move(w));
    params_.emplace_back("b" + std::to_string(i), std::move(b));
  }
}

Mlp::Mlp(MlpSpec spec, std::vector<ParamTensor> params) : spec_(std::move(spec)), params_(std::move(params)) {
  spec_.validate();
  if (params_.size() != 2 * spec_.n_layers()) throw Error(ErrorCode::ShapeMismatch, "MLP parameter count");
  for (std::size_t i = 0; i < spec_.n_layers(); ++i) {
    const auto& w = params_[2 * i].value;
    const auto& b = params_[2 * i + 1].value;
    if (w.rows() != spec_.layer_dims[i] || w.cols() != spec_.layer_dims[i + 1] || b.rows() != 1 ||
        b.cols() != spec_.layer_dims[i + 1]) {
      throw Error(ErrorCode::ShapeMismatch, "MLP layer " + std::to_string(i) + " parameter shape");
    }
    if (params_[2 * i].grad.size() != w.size()) params_[2 * i].zero_grad();
    if (params_[2 * i + 1].grad.size() != b.size()) params_[2 * i + 1].zero_grad();
  }
}

Var Mlp::forward(Tape& tape, Var input, bool train, Rng* rng) {
  if (input.cols() != input_dim()) {
    throw Error(ErrorCode::ShapeMismatch, "MLP expects " + std::to_string(input_dim()) + " input columns, got " +
                                              std::to_string(input.cols()));
  }
  Var h = input;
  const std::size_t L = spec_.n_layers();
  for (std::size_t i = 0; i < L; ++i) {
    h = add_row(matmul(h, tape.param(weight(i))), tape.param(bias(i)));
    if (i + 1 < L) {
      h = activate(h, spec_.hidden_activation(i));
      if (train && !spec_.dropout.empty() && spec_.dropout[i] > 0.0) {
        if (!rng) throw Error(ErrorCode::InvalidArgument, "dropout during training needs an Rng");
        h = dropout(h, spec_.dropout[i], *rng);
      }
    }
  }
  return h;
}

Matrix Mlp::eval(const Matrix& input) const {
  if (input.cols() != input_dim()) throw Error(ErrorCode::ShapeMismatch, "MLP input width");
  Matrix h = input;
  const std::size_t L = spec_.n_layers();
  for (std::size_t i = 0; i < L; ++i) {
    Matrix next = h * params_[2 * i].value;
    next.rowwise() += params_[2 * i + 1].value.row(0);
    h = (i + 1 < L) ? activate(next, spec_.hidden_activation(i)) : std::move(next);
  }
  return h;
}

std::vector<ParamTensor*> Mlp::parameter_ptrs() {
  std::vector<ParamTensor*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(&p);
  return out;
}

Var activate(Var x, Activation a) {
  switch (a) {
    case Activation::None: return x;
    case Activation::ReLU: return relu(x);
    case Activation::Softplus: return softplus(x);
    case Activation::Tanh: return tanh(x);
    case Activation::SiLU: return silu(x);
  }
  return x;
}

Matrix activate(const Matrix& x, Activation a) {
  switch (a) {
    case Activation::None: return x;
    case Activation::ReLU: return x.cwiseMax(0.0);
    case Activation::Softplus: return x.unaryExpr([](double v) { return softplus_scalar(v); });
    case Activation::Tanh: return x.array().tanh().matrix();
    case Activation::SiLU: return x.unaryExpr([](double v) { return v * sigmoid_scalar(v); });
  }
  return x;
}

Var dropout(Var x, double rate, Rng& rng) {
  if (rate <= 0.0) return x;
  const double keep = 1.0 - rate;
  Matrix mask(x.rows(), x.cols());
  for (Eigen::Index k = 0; k < mask.size(); ++k) mask(k) = uniform01(rng) < keep ? 1.0 / keep : 0.0;
  return x * x.tape()->constant(std::move(mask));
}

}  // namespace hal::nn
