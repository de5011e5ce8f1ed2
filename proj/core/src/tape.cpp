#include "hal/tape.hpp"

#include "hal/error.hpp"

#include <cmath>

namespace hal::nn {

const Matrix& Var::value() const {
  if (!tape_) throw Error(ErrorCode::InvalidArgument, "use of an empty Var");
  return tape_->value(id_);
}

Var Tape::constant(Matrix value) { return push(std::move(value), false, nullptr); }

Var Tape::variable(Matrix value) { return push(std::move(value), true, nullptr); }

Var Tape::param(ParamTensor& p) {
  Var v = push(p.value, true, nullptr);
  nodes_.back().param = &p;
  return v;
}

Var Tape::push(Matrix value, bool requires_grad, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

void Tape::backward(Var loss) {
  if (loss.tape() != this) throw Error(ErrorCode::InvalidArgument, "loss belongs to another tape");
  if (loss.rows() != 1 || loss.cols() != 1) throw Error(ErrorCode::ShapeMismatch, "backward needs a 1x1 loss");
  for (auto& n : nodes_) n.grad.resize(0, 0);
  auto& root = nodes_[static_cast<std::size_t>(loss.id())];
  if (!root.requires_grad) return;
  root.grad = Matrix::Ones(1, 1);
  for (int id = loss.id(); id >= 0; --id) {
    auto& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.requires_grad || n.grad.size() == 0) continue;
    if (n.backward) n.backward(*this, id);
    if (n.param) n.param->grad += n.grad;
  }
}

const Matrix& Tape::grad(Var v) const {
  static const Matrix empty;
  const auto& n = nodes_[static_cast<std::size_t>(v.id())];
  return n.grad.size() == 0 ? empty : n.grad;
}

void Tape::clear() { nodes_.clear(); }

namespace {

Tape& tape_of(Var a) {
  if (!a.valid()) throw Error(ErrorCode::InvalidArgument, "use of an empty Var");
  return *a.tape();
}

Tape& tape_of(Var a, Var b) {
  if (a.tape() != b.tape()) throw Error(ErrorCode::InvalidArgument, "operands live on different tapes");
  return tape_of(a);
}

void same_shape(Var a, Var b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(ErrorCode::ShapeMismatch, std::string(op) + ": " + std::to_string(a.rows()) + "x" +
                                              std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                                              std::to_string(b.cols()));
  }
}

bool any_grad(Tape& t, Var a) { return t.requires_grad(a.id()); }
bool any_grad(Tape& t, Var a, Var b) { return t.requires_grad(a.id()) || t.requires_grad(b.id()); }

// Elementwise unary op with derivative expressed through input and output.
template <typename Fwd, typename Deriv>
Var unary(Var a, Fwd fwd, Deriv deriv) {
  Tape& t = tape_of(a);
  Matrix out = a.value().unaryExpr(fwd);
  const int ia = a.id();
  return t.push(std::move(out), any_grad(t, a), [ia, deriv](Tape& tp, int self) {
    const Matrix& x = tp.value(ia);
    const Matrix& y = tp.value(self);
    Matrix d(x.rows(), x.cols());
    for (Eigen::Index k = 0; k < x.size(); ++k) d(k) = deriv(x(k), y(k));
    tp.accumulate(ia, tp.upstream(self).cwiseProduct(d));
  });
}

}  // namespace

double softplus_scalar(double x) noexcept { return x > 30.0 ? x : std::log1p(std::exp(x)); }

double sigmoid_scalar(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Var operator+(Var a, Var b) {
  Tape& t = tape_of(a, b);
  same_shape(a, b, "add");
  const int ia = a.id(), ib = b.id();
  return t.push(a.value() + b.value(), any_grad(t, a, b), [ia, ib](Tape& tp, int self) {
    tp.accumulate(ia, tp.upstream(self));
    tp.accumulate(ib, tp.upstream(self));
  });
}

Var operator-(Var a, Var b) {
  Tape& t = tape_of(a, b);
  same_shape(a, b, "sub");
  const int ia = a.id(), ib = b.id();
  return t.push(a.value() - b.value(), any_grad(t, a, b), [ia, ib](Tape& tp, int self) {
    tp.accumulate(ia, tp.upstream(self));
    tp.accumulate(ib, -tp.upstream(self));
  });
}

Var operator*(Var a, Var b) {
  Tape& t = tape_of(a, b);
  same_shape(a, b, "mul");
  const int ia = a.id(), ib = b.id();
  return t.push(a.value().cwiseProduct(b.value()), any_grad(t, a, b), [ia, ib](Tape& tp, int self) {
    tp.accumulate(ia, tp.upstream(self).cwiseProduct(tp.value(ib)));
    tp.accumulate(ib, tp.upstream(self).cwiseProduct(tp.value(ia)));
  });
}

Var operator*(double s, Var a) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  return t.push(s * a.value(), any_grad(t, a),
                [ia, s](Tape& tp, int self) { tp.accumulate(ia, s * tp.upstream(self)); });
}

Var operator-(Var a) { return -1.0 * a; }

Var add_scalar(Var a, double s) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  return t.push((a.value().array() + s).matrix(), any_grad(t, a),
                [ia](Tape& tp, int self) { tp.accumulate(ia, tp.upstream(self)); });
}

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  if (a.cols() != b.rows()) {
    throw Error(ErrorCode::ShapeMismatch, "matmul: inner dimensions " + std::to_string(a.cols()) + " and " +
                                              std::to_string(b.rows()));
  }
  const int ia = a.id(), ib = b.id();
  return t.push(a.value() * b.value(), any_grad(t, a, b), [ia, ib](Tape& tp, int self) {
    const Matrix& g = tp.upstream(self);
    if (tp.requires_grad(ia)) tp.accumulate(ia, g * tp.value(ib).transpose());
    if (tp.requires_grad(ib)) tp.accumulate(ib, tp.value(ia).transpose() * g);
  });
}

Var add_row(Var a, Var bias) {
  Tape& t = tape_of(a, bias);
  if (bias.rows() != 1 || bias.cols() != a.cols()) throw Error(ErrorCode::ShapeMismatch, "add_row: bias shape");
  const int ia = a.id(), ib = bias.id();
  Matrix out = a.value().rowwise() + bias.value().row(0);
  return t.push(std::move(out), any_grad(t, a, bias), [ia, ib](Tape& tp, int self) {
    const Matrix& g = tp.upstream(self);
    tp.accumulate(ia, g);
    if (tp.requires_grad(ib)) tp.accumulate(ib, g.colwise().sum());
  });
}

Var mul_col(Var a, Var c) {
  Tape& t = tape_of(a, c);
  if (c.cols() != 1 || c.rows() != a.rows()) throw Error(ErrorCode::ShapeMismatch, "mul_col: expected B x 1");
  const int ia = a.id(), ic = c.id();
  Matrix out = a.value().array().colwise() * c.value().col(0).array();
  return t.push(std::move(out), any_grad(t, a, c), [ia, ic](Tape& tp, int self) {
    const Matrix& g = tp.upstream(self);
    if (tp.requires_grad(ia)) {
      tp.accumulate(ia, (g.array().colwise() * tp.value(ic).col(0).array()).matrix());
    }
    if (tp.requires_grad(ic)) tp.accumulate(ic, g.cwiseProduct(tp.value(ia)).rowwise().sum());
  });
}

Var mul_row(Var a, Var r) {
  Tape& t = tape_of(a, r);
  if (r.rows() != 1 || r.cols() != a.cols()) throw Error(ErrorCode::ShapeMismatch, "mul_row: expected 1 x n");
  const int ia = a.id(), ir = r.id();
  Matrix out = a.value().array().rowwise() * r.value().row(0).array();
  return t.push(std::move(out), any_grad(t, a, r), [ia, ir](Tape& tp, int self) {
    const Matrix& g = tp.upstream(self);
    if (tp.requires_grad(ia)) {
      tp.accumulate(ia, (g.array().rowwise() * tp.value(ir).row(0).array()).matrix());
    }
    if (tp.requires_grad(ir)) tp.accumulate(ir, g.cwiseProduct(tp.value(ia)).colwise().sum());
  });
}

Var relu(Var a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var softplus(Var a) {
  return unary(a, [](double x) { return softplus_scalar(x); }, [](double x, double) { return sigmoid_scalar(x); });
}

Var tanh(Var a) {
  return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var silu(Var a) {
  return unary(
      a, [](double x) { return x * sigmoid_scalar(x); },
      [](double x, double) {
        const double s = sigmoid_scalar(x);
        return s * (1.0 + x * (1.0 - s));
      });
}

Var sigmoid(Var a) {
  return unary(a, [](double x) { return sigmoid_scalar(x); }, [](double, double y) { return y * (1.0 - y); });
}

Var exp(Var a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var square(Var a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var abs(Var a) {
  return unary(
      a, [](double x) { return std::abs(x); },
      [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var sum(Var a) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return t.push(std::move(out), any_grad(t, a), [ia](Tape& tp, int self) {
    const Matrix& x = tp.value(ia);
    tp.accumulate(ia, Matrix::Constant(x.rows(), x.cols(), tp.upstream(self)(0, 0)));
  });
}

Var mean(Var a) {
  const auto n = static_cast<double>(a.value().size());
  return (1.0 / n) * sum(a);
}

Var row_sum(Var a) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  return t.push(a.value().rowwise().sum(), any_grad(t, a), [ia](Tape& tp, int self) {
    const Matrix& x = tp.value(ia);
    tp.accumulate(ia, tp.upstream(self).replicate(1, x.cols()));
  });
}

Var softmax_rows(Var a) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  Matrix out = a.value();
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const double mx = out.row(r).maxCoeff();
    out.row(r) = (out.row(r).array() - mx).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  return t.push(std::move(out), any_grad(t, a), [ia](Tape& tp, int self) {
    const Matrix& y = tp.value(self);
    const Matrix& g = tp.upstream(self);
    const Eigen::VectorXd dot = g.cwiseProduct(y).rowwise().sum();
    Matrix d = y.array() * (g.array().colwise() - dot.array());
    tp.accumulate(ia, d);
  });
}

Var cumsum_cols(Var a) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  Matrix out = a.value();
  for (Eigen::Index c = 1; c < out.cols(); ++c) out.col(c) += out.col(c - 1);
  return t.push(std::move(out), any_grad(t, a), [ia](Tape& tp, int self) {
    Matrix g = tp.upstream(self);
    for (Eigen::Index c = g.cols() - 2; c >= 0; --c) g.col(c) += g.col(c + 1);
    tp.accumulate(ia, g);
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw Error(ErrorCode::InvalidArgument, "concat_cols of nothing");
  Tape& t = tape_of(parts.front());
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  bool rg = false;
  std::vector<int> ids;
  std::vector<Eigen::Index> widths;
  for (const auto& p : parts) {
    if (p.tape() != &t) throw Error(ErrorCode::InvalidArgument, "operands live on different tapes");
    if (p.rows() != rows) throw Error(ErrorCode::ShapeMismatch, "concat_cols: row counts differ");
    cols += p.cols();
    rg = rg || t.requires_grad(p.id());
    ids.push_back(p.id());
    widths.push_back(p.cols());
  }
  Matrix out(rows, cols);
  Eigen::Index c = 0;
  for (const auto& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  return t.push(std::move(out), rg, [ids, widths](Tape& tp, int self) {
    const Matrix& g = tp.upstream(self);
    Eigen::Index off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (tp.requires_grad(ids[k])) tp.accumulate(ids[k], g.middleCols(off, widths[k]));
      off += widths[k];
    }
  });
}

Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  Tape& t = tape_of(a);
  if (start < 0 || count < 0 || start + count > a.cols()) throw Error(ErrorCode::ShapeMismatch, "slice_cols range");
  const int ia = a.id();
  const Eigen::Index cols = a.cols();
  return t.push(a.value().middleCols(start, count), any_grad(t, a), [ia, start, count, cols](Tape& tp, int self) {
    Matrix g = Matrix::Zero(tp.value(ia).rows(), cols);
    g.middleCols(start, count) = tp.upstream(self);
    tp.accumulate(ia, g);
  });
}

Var mix_blocks(Var blocks, Var weights) {
  Tape& t = tape_of(blocks, weights);
  const Eigen::Index m = weights.cols();
  if (weights.rows() != blocks.rows() || m == 0 || blocks.cols() % m != 0) {
    throw Error(ErrorCode::ShapeMismatch, "mix_blocks: expected B x m*n blocks and B x m weights");
  }
  const Eigen::Index n = blocks.cols() / m;
  const Matrix& F = blocks.value();
  const Matrix& W = weights.value();
  Matrix out = Matrix::Zero(F.rows(), n);
  for (Eigen::Index i = 0; i < m; ++i) out += (F.middleCols(i * n, n).array().colwise() * W.col(i).array()).matrix();
  const int ib = blocks.id(), iw = weights.id();
  return t.push(std::move(out), any_grad(t, blocks, weights), [ib, iw, m, n](Tape& tp, int self) {
    const Matrix& g = tp.upstream(self);
    const Matrix& F = tp.value(ib);
    const Matrix& W = tp.value(iw);
    if (tp.requires_grad(ib)) {
      Matrix gf(F.rows(), F.cols());
      for (Eigen::Index i = 0; i < m; ++i) gf.middleCols(i * n, n) = (g.array().colwise() * W.col(i).array()).matrix();
      tp.accumulate(ib, gf);
    }
    if (tp.requires_grad(iw)) {
      Matrix gw(W.rows(), m);
      for (Eigen::Index i = 0; i < m; ++i) gw.col(i) = F.middleCols(i * n, n).cwiseProduct(g).rowwise().sum();
      tp.accumulate(iw, gw);
    }
  });
}

Var stop_gradient(Var a) { return tape_of(a).constant(a.value()); }

Var straight_through(Var a, Matrix forward_value) {
  Tape& t = tape_of(a);
  if (forward_value.rows() != a.rows() || forward_value.cols() != a.cols()) {
    throw Error(ErrorCode::ShapeMismatch, "straight_through: forward value shape");
  }
  const int ia = a.id();
  return t.push(std::move(forward_value), any_grad(t, a),
                [ia](Tape& tp, int self) { tp.accumulate(ia, tp.upstream(self)); });
}

}  // namespace hal::nn
