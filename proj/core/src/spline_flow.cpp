#include "hal/spline_flow.hpp"

#include "dual.hpp"
#include "hal/error.hpp"
#include "hal/optim.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numbers>

namespace hal::flow {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

double derivative_offset(double min_derivative) { return std::log(std::expm1(1.0 - min_derivative)); }

template <typename T>
void rq_bin(const T& x, const T& xk, const T& xk1, const T& yk, const T& yk1, const T& dk, const T& dk1, T& y,
            T& logdet) {
  using std::log;
  using detail::log;
  const T w = xk1 - xk;
  const T h = yk1 - yk;
  const T s = h / w;
  const T xi = (x - xk) / w;
  const T one_m = 1.0 - xi;
  const T om = xi * one_m;
  const T den = s + (dk1 + dk - 2.0 * s) * om;
  y = yk + h * (s * xi * xi + dk * om) / den;
  const T dnum = s * s * (dk1 * xi * xi + 2.0 * s * om + dk * one_m * one_m);
  logdet = log(dnum) - 2.0 * log(den);
}

int find_bin(const Eigen::Ref<const Eigen::RowVectorXd>& knots, double v) {
  const int K = static_cast<int>(knots.size()) - 1;
  int lo = 0, hi = K;
  while (hi - lo > 1) {
    const int mid = (lo + hi) / 2;
    if (knots[mid] <= v) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return lo;
}

}  // namespace

RqKnots knots_from_raw(const Eigen::Ref<const Eigen::RowVectorXd>& raw, int n_bins, double bound,
                       const RqLimits& limits) {
  const int K = n_bins;
  if (raw.size() != raw_params_per_spline(K)) throw Error(ErrorCode::ShapeMismatch, "spline raw parameter count");
  auto normalized = [&](Eigen::Index off, double min_size) {
    Eigen::VectorXd u = raw.segment(off, K).transpose();
    u = (u.array() - u.maxCoeff()).exp().matrix();
    u /= u.sum();
    return Eigen::VectorXd((min_size + (1.0 - min_size * K) * u.array()).matrix());
  };
  const Eigen::VectorXd w = normalized(0, limits.min_width);
  const Eigen::VectorXd h = normalized(K, limits.min_height);
  RqKnots k;
  k.xs.resize(K + 1);
  k.ys.resize(K + 1);
  k.ds.resize(K + 1);
  k.xs[0] = -bound;
  k.ys[0] = -bound;
  double cw = 0.0, ch = 0.0;
  for (int i = 1; i < K; ++i) {
    cw += w[i - 1];
    ch += h[i - 1];
    k.xs[i] = 2.0 * bound * cw + -bound;
    k.ys[i] = 2.0 * bound * ch + -bound;
  }
  k.xs[K] = bound;
  k.ys[K] = bound;
  const double c0 = derivative_offset(limits.min_derivative);
  k.ds[0] = 1.0;
  k.ds[K] = 1.0;
  for (int i = 1; i < K; ++i) k.ds[i] = nn::softplus_scalar(raw[2 * K + i - 1] + c0) + limits.min_derivative;
  return k;
}

double rq_forward(const RqKnots& k, double x, double* logdet) {
  const int K = k.n_bins();
  if (!(x >= k.xs[0] && x < k.xs[K])) {
    if (logdet) *logdet = 0.0;
    return x;
  }
  const int b = find_bin(k.xs.transpose(), x);
  double y = 0.0, ld = 0.0;
  rq_bin(x, k.xs[b], k.xs[b + 1], k.ys[b], k.ys[b + 1], k.ds[b], k.ds[b + 1], y, ld);
  if (logdet) *logdet = ld;
  return y;
}

double rq_inverse(const RqKnots& k, double y, double* logdet) {
  const int K = k.n_bins();
  if (!(y >= k.ys[0] && y < k.ys[K])) {
    if (logdet) *logdet = 0.0;
    return y;
  }
  const int b = find_bin(k.ys.transpose(), y);
  const double xk = k.xs[b], w = k.xs[b + 1] - xk;
  const double yk = k.ys[b], h = k.ys[b + 1] - yk;
  const double dk = k.ds[b], dk1 = k.ds[b + 1];
  const double s = h / w;
  const double dy = y - yk;
  const double a = h * (s - dk) + dy * (dk1 + dk - 2.0 * s);
  const double bq = h * dk - dy * (dk1 + dk - 2.0 * s);
  const double c = -s * dy;
  const double disc = std::max(0.0, bq * bq - 4.0 * a * c);
  const double xi = std::clamp(2.0 * c / (-bq - std::sqrt(disc)), 0.0, 1.0);
  const double x = xi * w + xk;
  if (logdet) {
    double yy = 0.0, ld = 0.0;
    rq_bin(x, xk, xk + w, yk, yk + h, dk, dk1, yy, ld);
    *logdet = -ld;
  }
  return x;
}

TapedKnots knots_from_raw(Var raw, int n_bins, double bound, const RqLimits& limits) {
  const int K = n_bins;
  if (raw.cols() != raw_params_per_spline(K)) throw Error(ErrorCode::ShapeMismatch, "spline raw parameter count");
  nn::Tape& t = *raw.tape();
  const Eigen::Index B = raw.rows();
  const Var lo = t.constant(Matrix::Constant(B, 1, -bound));
  const Var hi = t.constant(Matrix::Constant(B, 1, bound));
  auto positions = [&](Eigen::Index off, double min_size) {
    const Var sizes = nn::add_scalar((1.0 - min_size * K) * nn::softmax_rows(nn::slice_cols(raw, off, K)), min_size);
    const Var inner = nn::add_scalar((2.0 * bound) * nn::cumsum_cols(nn::slice_cols(sizes, 0, K - 1)), -bound);
    return nn::concat_cols({lo, inner, hi});
  };
  TapedKnots out;
  out.xs = positions(0, limits.min_width);
  out.ys = positions(K, limits.min_height);
  const Var ones = t.constant(Matrix::Ones(B, 1));
  const Var inner_d = nn::add_scalar(
      nn::softplus(nn::add_scalar(nn::slice_cols(raw, 2 * K, K - 1), derivative_offset(limits.min_derivative))),
      limits.min_derivative);
  out.ds = nn::concat_cols({ones, inner_d, ones});
  return out;
}

Var rq_spline(Var x, Var xs, Var ys, Var ds) {
  nn::Tape& t = *x.tape();
  if (x.cols() != 1 || xs.rows() != x.rows() || ys.rows() != x.rows() || ds.rows() != x.rows() ||
      xs.cols() != ys.cols() || xs.cols() != ds.cols() || xs.cols() < 2) {
    throw Error(ErrorCode::ShapeMismatch, "rq_spline: inconsistent shapes");
  }
  const Eigen::Index B = x.rows();
  const Eigen::Index K = xs.cols() - 1;
  const Matrix& X = x.value();
  const Matrix& XS = xs.value();
  const Matrix& YS = ys.value();
  const Matrix& DS = ds.value();
  Matrix out(B, 2);
  for (Eigen::Index r = 0; r < B; ++r) {
    const double v = X(r, 0);
    if (!(v >= XS(r, 0) && v < XS(r, K))) {
      out(r, 0) = v;
      out(r, 1) = 0.0;
      continue;
    }
    const int b = find_bin(XS.row(r), v);
    double y = 0.0, ld = 0.0;
    rq_bin(v, XS(r, b), XS(r, b + 1), YS(r, b), YS(r, b + 1), DS(r, b), DS(r, b + 1), y, ld);
    out(r, 0) = y;
    out(r, 1) = ld;
  }
  const bool rg = t.requires_grad(x.id()) || t.requires_grad(xs.id()) || t.requires_grad(ys.id()) ||
                  t.requires_grad(ds.id());
  const int ix = x.id(), ixs = xs.id(), iys = ys.id(), ids = ds.id();
  return t.push(std::move(out), rg, [ix, ixs, iys, ids](nn::Tape& tp, int self) {
    using D = detail::Dual<7>;
    const Matrix& X = tp.value(ix);
    const Matrix& XS = tp.value(ixs);
    const Matrix& YS = tp.value(iys);
    const Matrix& DS = tp.value(ids);
    const Matrix& g = tp.upstream(self);
    const Eigen::Index B = X.rows();
    const Eigen::Index K = XS.cols() - 1;
    Matrix gx = Matrix::Zero(B, 1);
    Matrix gxs = Matrix::Zero(B, K + 1);
    Matrix gys = Matrix::Zero(B, K + 1);
    Matrix gds = Matrix::Zero(B, K + 1);
    for (Eigen::Index r = 0; r < B; ++r) {
      const double v = X(r, 0);
      if (!(v >= XS(r, 0) && v < XS(r, K))) {
        gx(r, 0) = g(r, 0);
        continue;
      }
      const int b = find_bin(XS.row(r), v);
      D y, ld;
      rq_bin(D(v, 0), D(XS(r, b), 1), D(XS(r, b + 1), 2), D(YS(r, b), 3), D(YS(r, b + 1), 4), D(DS(r, b), 5),
             D(DS(r, b + 1), 6), y, ld);
      const D::Grad total = g(r, 0) * y.d + g(r, 1) * ld.d;
      gx(r, 0) = total[0];
      gxs(r, b) += total[1];
      gxs(r, b + 1) += total[2];
      gys(r, b) += total[3];
      gys(r, b + 1) += total[4];
      gds(r, b) += total[5];
      gds(r, b + 1) += total[6];
    }
    tp.accumulate(ix, gx);
    tp.accumulate(ixs, gxs);
    tp.accumulate(iys, gys);
    tp.accumulate(ids, gds);
  });
}

SplineFlow::SplineFlow(SplineFlowConfig config, int cond_dim, Rng& rng) : config_(std::move(config)) {
  if (config_.n_layers < 1 || config_.n_bins < 2 || !(config_.tail_bound > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "spline flow needs >= 1 layer, >= 2 bins and a positive tail bound");
  }
  if (cond_dim < 1) throw Error(ErrorCode::InvalidArgument, "conditioner input must be non-empty");
  nn::MlpSpec spec;
  spec.layer_dims.push_back(cond_dim);
  for (int h : config_.conditioner_hidden) spec.layer_dims.push_back(h);
  spec.layer_dims.push_back(config_.n_layers * raw_params_per_spline(config_.n_bins));
  spec.activation = nn::Activation::Tanh;
  conditioner_ = nn::Mlp(spec, rng);
  const std::size_t last = spec.n_layers() - 1;
  conditioner_.weight(last).value.setZero();
  conditioner_.bias(last).value.setZero();
}

SplineFlow::SplineFlow(SplineFlowConfig config, nn::Mlp conditioner, double shift, double log_scale)
    : config_(std::move(config)), conditioner_(std::move(conditioner)) {
  if (conditioner_.output_dim() != config_.n_layers * raw_params_per_spline(config_.n_bins)) {
    throw Error(ErrorCode::ShapeMismatch, "conditioner output does not match the spline layout");
  }
  set_affine(shift, log_scale);
}

void SplineFlow::set_affine(double shift, double log_scale) {
  shift_.value(0, 0) = shift;
  log_scale_.value(0, 0) = log_scale;
}

std::vector<RqKnots> SplineFlow::layer_knots(const Eigen::RowVectorXd& cond) const {
  const Matrix raw = conditioner_.eval(cond);
  const int P = raw_params_per_spline(config_.n_bins);
  std::vector<RqKnots> out;
  out.reserve(static_cast<std::size_t>(config_.n_layers));
  for (int l = 0; l < config_.n_layers; ++l) {
    out.push_back(knots_from_raw(raw.row(0).segment(l * P, P), config_.n_bins, config_.tail_bound, config_.limits));
  }
  return out;
}

double SplineFlow::to_base(double y, const Eigen::RowVectorXd& cond, double* logdet) const {
  double u = (y - shift()) * std::exp(-log_scale());
  double total = -log_scale();
  for (const auto& k : layer_knots(cond)) {
    double ld = 0.0;
    u = rq_forward(k, u, &ld);
    total += ld;
  }
  if (logdet) *logdet = total;
  return u;
}

double SplineFlow::from_base(double u, const Eigen::RowVectorXd& cond) const {
  const auto knots = layer_knots(cond);
  for (auto it = knots.rbegin(); it != knots.rend(); ++it) u = rq_inverse(*it, u);
  return u * std::exp(log_scale()) + shift();
}

double SplineFlow::log_density(double tau, const Eigen::RowVectorXd& cond) const {
  if (!(tau > 0.0)) throw Error(ErrorCode::NonPositiveTime, "interevent time must be positive");
  const double y = std::log(tau);
  double ld = 0.0;
  const double u = to_base(y, cond, &ld);
  return -0.5 * u * u - kHalfLog2Pi + ld - y;
}

double SplineFlow::sample(const Eigen::RowVectorXd& cond, Rng& rng) const {
  return std::exp(from_base(standard_normal(rng), cond));
}

Var SplineFlow::log_density(nn::Tape& tape, const Eigen::VectorXd& taus, const Matrix& cond) {
  if (cond.rows() != taus.size()) throw Error(ErrorCode::ShapeMismatch, "one conditioning row per time");
  for (Eigen::Index i = 0; i < taus.size(); ++i) {
    if (!(taus[i] > 0.0)) throw Error(ErrorCode::NonPositiveTime, "interevent time must be positive");
  }
  const Eigen::Index B = taus.size();
  const Var y = tape.constant(taus.array().log().matrix());
  const Var shift = tape.param(shift_);
  const Var log_scale = tape.param(log_scale_);
  Var u = nn::mul_row(nn::add_row(y, -shift), nn::exp(-log_scale));
  const Var raw = conditioner_.forward(tape, tape.constant(cond));
  const int P = raw_params_per_spline(config_.n_bins);
  Var ld = nn::add_row(tape.constant(Matrix::Zero(B, 1)), -log_scale);
  for (int l = 0; l < config_.n_layers; ++l) {
    const auto k = knots_from_raw(nn::slice_cols(raw, l * P, P), config_.n_bins, config_.tail_bound, config_.limits);
    const Var out = rq_spline(u, k.xs, k.ys, k.ds);
    u = nn::slice_cols(out, 0, 1);
    ld = ld + nn::slice_cols(out, 1, 1);
  }
  return nn::add_scalar(-0.5 * nn::square(u) + ld - y, -kHalfLog2Pi);
}

std::vector<nn::ParamTensor*> SplineFlow::parameter_ptrs() {
  auto out = conditioner_.parameter_ptrs();
  out.push_back(&shift_);
  out.push_back(&log_scale_);
  return out;
}

std::vector<double> fit_flow(SplineFlow& flow, const Eigen::VectorXd& taus, const Matrix& cond,
                             const FitConfig& config) {
  if (taus.size() == 0) throw Error(ErrorCode::InvalidArgument, "no samples to fit");
  if (cond.rows() != taus.size()) throw Error(ErrorCode::ShapeMismatch, "one conditioning row per sample");
  if (!(taus.array() > 0.0).all()) throw Error(ErrorCode::NonPositiveTime, "interevent times must be positive");
  if (config.data_init) {
    const Eigen::ArrayXd y = taus.array().log();
    const double mu = y.mean();
    const double sd = taus.size() > 1 ? std::sqrt((y - mu).square().mean()) : 0.0;
    flow.set_affine(mu, std::log(std::max(sd, 0.05)));
  }
  nn::Adam opt(flow.parameter_ptrs(), {.lr = config.lr});
  std::vector<double> history;
  history.reserve(static_cast<std::size_t>(config.iterations));
  nn::Tape tape;
  for (int it = 0; it < config.iterations; ++it) {
    tape.clear();
    const Var loss = -nn::mean(flow.log_density(tape, taus, cond));
    const double value = loss.scalar();
    if (!std::isfinite(value)) {
      throw Error(ErrorCode::DivergedLoss, "flow NLL became non-finite at iteration " + std::to_string(it));
    }
    opt.zero_grad();
    tape.backward(loss);
    opt.step();
    history.push_back(value);
    if (config.log_every > 0 && (it + 1) % config.log_every == 0) {
      std::cerr << "flow iter " << (it + 1) << " nll " << value << '\n';
    }
  }
  return history;
}

}  // namespace hal::flow
