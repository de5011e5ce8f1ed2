#pragma once

#include "hal/random.hpp"
#include "hal/tape.hpp"

#include <string>
#include <vector>

namespace hal::nn {

enum class Activation { None, ReLU, Softplus, Tanh, SiLU };

[[nodiscard]] const char* to_string(Activation a) noexcept;
[[nodiscard]] Activation activation_from_string(const std::string& s);

struct MlpSpec {
  std::vector<int> layer_dims;  ///< input, hidden..., output
  Activation activation = Activation::ReLU;
  /// Per hidden layer; overrides `activation` when non-empty.
  std::vector<Activation> hidden_activations;
  /// Per hidden layer dropout rate in [0, 1); empty means none.
  std::vector<double> dropout;

  [[nodiscard]] std::size_t n_layers() const noexcept { return layer_dims.size() < 2 ? 0 : layer_dims.size() - 1; }
  [[nodiscard]] Activation hidden_activation(std::size_t i) const {
    return hidden_activations.empty() ? activation : hidden_activations.at(i);
  }
  void validate() const;
};

/// Affine layers with activations between them (none after the last).
/// Dropout uses inverted scaling so evaluation needs no rescale.
class Mlp {
 public:
  Mlp() = default;
  /// Weights and biases drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  Mlp(MlpSpec spec, Rng& rng);
  Mlp(MlpSpec spec, std::vector<ParamTensor> params);

  /// Taped forward pass. `rng` is required when training with dropout.
  [[nodiscard]] Var forward(Tape& tape, Var input, bool train = false, Rng* rng = nullptr);
  /// Inference without a tape; dropout is the identity.
  [[nodiscard]] Matrix eval(const Matrix& input) const;

  [[nodiscard]] const MlpSpec& spec() const noexcept { return spec_; }
  [[nodiscard]] std::vector<ParamTensor>& params() noexcept { return params_; }
  [[nodiscard]] const std::vector<ParamTensor>& params() const noexcept { return params_; }
  [[nodiscard]] std::vector<ParamTensor*> parameter_ptrs();
  [[nodiscard]] int input_dim() const { return spec_.layer_dims.front(); }
  [[nodiscard]] int output_dim() const { return spec_.layer_dims.back(); }

  /// Layer i weight (in x out) and bias (1 x out).
  [[nodiscard]] ParamTensor& weight(std::size_t i) { return params_[2 * i]; }
  [[nodiscard]] ParamTensor& bias(std::size_t i) { return params_[2 * i + 1]; }

 private:
  MlpSpec spec_;
  std::vector<ParamTensor> params_;
};

[[nodiscard]] Var activate(Var x, Activation a);
[[nodiscard]] Matrix activate(const Matrix& x, Activation a);

/// Inverted dropout: kept units are divided by (1 - rate).
[[nodiscard]] Var dropout(Var x, double rate, Rng& rng);

}  // namespace hal::nn
