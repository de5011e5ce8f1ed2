#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace hal::nn {

using Matrix = Eigen::MatrixXd;

/// Trainable parameter block: values plus a same-shaped gradient accumulator.
struct ParamTensor {
  std::string name;
  Matrix value;
  Matrix grad;

  ParamTensor() = default;
  ParamTensor(std::string n, Matrix v) : name(std::move(n)), value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())) {}

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
  [[nodiscard]] Eigen::Index size() const noexcept { return value.size(); }
};

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid until the tape is cleared.
class Var {
 public:
  Var() = default;

  [[nodiscard]] const Matrix& value() const;
  [[nodiscard]] Eigen::Index rows() const { return value().rows(); }
  [[nodiscard]] Eigen::Index cols() const { return value().cols(); }
  [[nodiscard]] double scalar() const { return value()(0, 0); }
  [[nodiscard]] Tape* tape() const noexcept { return tape_; }
  [[nodiscard]] int id() const noexcept { return id_; }
  [[nodiscard]] bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// Reverse-mode tape over dense matrices (rows are batch entries).
///
/// Operations append nodes in evaluation order; `backward` walks them in
/// reverse and accumulates gradients. Parameters registered with `param` have
/// their gradient added into `ParamTensor::grad`. One tape per thread.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int self)>;

  Var constant(Matrix value);
  /// Leaf that receives a gradient (readable through `grad`).
  Var variable(Matrix value);
  Var param(ParamTensor& p);

  /// Internal node constructor used by the operations.
  Var push(Matrix value, bool requires_grad, BackwardFn backward);

  void backward(Var loss);

  [[nodiscard]] const Matrix& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  [[nodiscard]] const Matrix& grad(Var v) const;
  [[nodiscard]] bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }

  /// grad(id) += g, allocating a zero gradient on first use.
  template <typename Derived>
  void accumulate(int id, const Eigen::MatrixBase<Derived>& g) {
    auto& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }
  [[nodiscard]] const Matrix& upstream(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }

  [[nodiscard]] std::size_t size() const noexcept { return nodes_.size(); }
  void clear();

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    BackwardFn backward;
    ParamTensor* param = nullptr;
  };
  std::vector<Node> nodes_;
};

// Elementwise arithmetic; shapes must match exactly.
[[nodiscard]] Var operator+(Var a, Var b);
[[nodiscard]] Var operator-(Var a, Var b);
[[nodiscard]] Var operator*(Var a, Var b);
[[nodiscard]] Var operator*(double s, Var a);
[[nodiscard]] Var operator-(Var a);
[[nodiscard]] Var add_scalar(Var a, double s);

[[nodiscard]] Var matmul(Var a, Var b);
/// a (B x n) + bias (1 x n) broadcast over rows.
[[nodiscard]] Var add_row(Var a, Var bias);
/// a (B x n) scaled row-wise by c (B x 1).
[[nodiscard]] Var mul_col(Var a, Var c);
/// a (B x n) scaled column-wise by r (1 x n).
[[nodiscard]] Var mul_row(Var a, Var r);

[[nodiscard]] Var relu(Var a);
[[nodiscard]] Var softplus(Var a);
[[nodiscard]] Var tanh(Var a);
[[nodiscard]] Var silu(Var a);
[[nodiscard]] Var sigmoid(Var a);
[[nodiscard]] Var exp(Var a);
[[nodiscard]] Var log(Var a);
[[nodiscard]] Var square(Var a);
[[nodiscard]] Var abs(Var a);

[[nodiscard]] Var sum(Var a);
[[nodiscard]] Var mean(Var a);
/// Per-row sums: (B x n) -> (B x 1).
[[nodiscard]] Var row_sum(Var a);
[[nodiscard]] Var softmax_rows(Var a);
[[nodiscard]] Var cumsum_cols(Var a);

[[nodiscard]] Var concat_cols(const std::vector<Var>& parts);
[[nodiscard]] Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);
[[nodiscard]] Var stop_gradient(Var a);

/// Weighted block sum: blocks (B x m*n) holds m column blocks of width n;
/// returns sum_i weights(:, i) * block_i, shape B x n.
[[nodiscard]] Var mix_blocks(Var blocks, Var weights);

/// Forward value `forward_value`, backward identity onto `a`
/// (the `v - a.detach() + a` construction).
[[nodiscard]] Var straight_through(Var a, Matrix forward_value);

/// Numerical helpers shared with inference-only code paths.
[[nodiscard]] double softplus_scalar(double x) noexcept;
[[nodiscard]] double sigmoid_scalar(double x) noexcept;

}  // namespace hal::nn
