#include "hal/recovery.hpp"

#include "hal/error.hpp"
#include "hal/optim.hpp"
#include "hal/sampling.hpp"
#include "json_detail.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <set>
#include <unordered_map>

namespace hal::recovery {

namespace {

int argmax_row(const Matrix& m, Eigen::Index r) {
  Eigen::Index best = 0;
  m.row(r).maxCoeff(&best);
  return static_cast<int>(best);
}

Matrix stack_states(const std::vector<StateVec>& states) {
  if (states.empty()) return Matrix();
  Matrix out(static_cast<Eigen::Index>(states.size()), states.front().size());
  for (std::size_t i = 0; i < states.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = states[i].transpose();
  return out;
}

}  // namespace

const char* to_string(LatentKind k) noexcept {
  switch (k) {
    case LatentKind::Categorical: return "categorical";
    case LatentKind::Softmax: return "softmax";
    case LatentKind::GaussianReparam: return "gaussian";
    case LatentKind::Deterministic: return "deterministic";
    case LatentKind::None: return "none";
  }
  return "none";
}

LatentKind latent_kind_from_string(const std::string& s) {
  if (s == "categorical") return LatentKind::Categorical;
  if (s == "softmax") return LatentKind::Softmax;
  if (s == "gaussian" || s == "latent-node") return LatentKind::GaussianReparam;
  if (s == "deterministic" || s == "dc-node") return LatentKind::Deterministic;
  if (s == "none" || s == "anode") return LatentKind::None;
  throw Error(ErrorCode::InvalidArgument, "unknown latent kind '" + s + "'");
}

// ---------------------------------------------------------------------------
// Standardizer and features

Standardizer Standardizer::fit(const Matrix& rows) {
  if (rows.rows() == 0) throw Error(ErrorCode::InvalidArgument, "cannot fit a scaler on no rows");
  Standardizer s;
  s.mean = rows.colwise().mean();
  const Matrix centered = rows.rowwise() - s.mean;
  s.scale = (centered.array().square().colwise().sum() / static_cast<double>(rows.rows())).sqrt().matrix();
  for (Eigen::Index j = 0; j < s.scale.size(); ++j) {
    if (!(s.scale[j] > 1e-12)) s.scale[j] = 1.0;
  }
  return s;
}

Standardizer Standardizer::identity(int dim) {
  Standardizer s;
  s.mean = Eigen::RowVectorXd::Zero(dim);
  s.scale = Eigen::RowVectorXd::Ones(dim);
  return s;
}

Matrix Standardizer::apply(const Matrix& rows) const {
  if (rows.cols() != mean.size()) throw Error(ErrorCode::ShapeMismatch, "scaler width");
  return ((rows.rowwise() - mean).array().rowwise() / scale.array()).matrix();
}

Matrix Standardizer::invert(const Matrix& rows) const {
  if (rows.cols() != mean.size()) throw Error(ErrorCode::ShapeMismatch, "scaler width");
  return ((rows.array().rowwise() * scale.array()).rowwise() + mean.array()).matrix();
}

Eigen::RowVectorXd segment_features(const Subtrajectory& seg) {
  if (seg.size() == 0) throw Error(ErrorCode::EmptyTrajectory, "empty subtrajectory");
  const Eigen::Index n = seg.states.front().size();
  Eigen::RowVectorXd f(feature_dim(static_cast<int>(n)));
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(n);
  for (const auto& s : seg.states) mean += s;
  mean /= static_cast<double>(seg.size());
  f.segment(0, n) = seg.states.front().transpose();
  f.segment(n, n) = seg.states.back().transpose();
  f.segment(2 * n, n) = mean.transpose();
  if (seg.size() >= 2) {
    f.segment(3 * n, n) = (seg.states[1] - seg.states[0]).transpose();
  } else {
    f.segment(3 * n, n).setZero();
  }
  f[4 * n] = std::log1p(std::max(0.0, seg.times.back() - seg.times.front()));
  return f;
}

Matrix segment_features(const std::vector<Subtrajectory>& segs) {
  if (segs.empty()) return Matrix();
  const Eigen::Index dim = feature_dim(static_cast<int>(segs.front().states.front().size()));
  Matrix out(static_cast<Eigen::Index>(segs.size()), dim);
  for (std::size_t i = 0; i < segs.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = segment_features(segs[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Model

void ModelConfig::validate() const {
  if (n_modes < 1) throw Error(ErrorCode::InvalidArgument, "n_modes must be at least 1");
  if (!(encoder_dropout >= 0.0 && encoder_dropout < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "encoder dropout must lie in [0, 1)");
  }
  if (!field_activations.empty() && field_activations.size() != field_hidden.size()) {
    throw Error(ErrorCode::InvalidArgument, "field_activations needs one entry per hidden field layer");
  }
  if (latent == LatentKind::None && per_step) {
    throw Error(ErrorCode::InvalidArgument, "a per-step encoder needs a latent kind other than none");
  }
  if (anode_augment < 0) throw Error(ErrorCode::InvalidArgument, "anode_augment must be non-negative");
}

NhaRecoveryModel::NhaRecoveryModel(ModelConfig config, int state_dim, std::uint64_t seed)
    : config_(std::move(config)), state_dim_(state_dim) {
  config_.validate();
  if (state_dim < 1) throw Error(ErrorCode::InvalidArgument, "state_dim must be positive");
  Rng rng = make_rng(seed, 1);
  const int m = config_.n_modes;
  if (has_encoder()) {
    nn::MlpSpec spec;
    spec.layer_dims.push_back(config_.per_step ? state_dim : feature_dim(state_dim));
    for (int h : config_.encoder_hidden) spec.layer_dims.push_back(h);
    spec.layer_dims.push_back(config_.latent == LatentKind::GaussianReparam ? 2 * m : m);
    spec.activation = config_.encoder_activation;
    if (config_.encoder_dropout > 0.0 && !config_.encoder_hidden.empty()) {
      spec.dropout.assign(config_.encoder_hidden.size(), config_.encoder_dropout);
    }
    encoder_ = nn::Mlp(spec, rng);
    nn::MlpSpec fspec;
    fspec.layer_dims.push_back(state_dim);
    for (int h : config_.field_hidden) fspec.layer_dims.push_back(h);
    fspec.layer_dims.push_back(state_dim);
    fspec.activation = nn::Activation::Tanh;
    fspec.hidden_activations = config_.field_activations;
    for (int i = 0; i < m; ++i) fields_.emplace_back(fspec, rng);
  } else {
    const int d = state_dim + config_.anode_augment;
    nn::MlpSpec fspec;
    fspec.layer_dims.push_back(d);
    for (int h : config_.anode_hidden) fspec.layer_dims.push_back(h);
    fspec.layer_dims.push_back(d);
    fspec.activation = nn::Activation::Softplus;
    fields_.emplace_back(fspec, rng);
  }
  state_scaler = Standardizer::identity(state_dim);
  feature_scaler = Standardizer::identity(feature_dim(state_dim));
}

int NhaRecoveryModel::field_dim() const noexcept {
  return has_encoder() ? state_dim_ : state_dim_ + config_.anode_augment;
}

std::vector<nn::ParamTensor*> NhaRecoveryModel::encoder_parameters() {
  if (!has_encoder()) return {};
  return encoder_.parameter_ptrs();
}

std::vector<nn::ParamTensor*> NhaRecoveryModel::decoder_parameters() {
  std::vector<nn::ParamTensor*> out;
  for (auto& f : fields_) {
    for (auto* p : f.parameter_ptrs()) out.push_back(p);
  }
  return out;
}

Matrix NhaRecoveryModel::latent_mean(const Matrix& raw_inputs) const {
  if (!has_encoder()) return Matrix::Ones(raw_inputs.rows(), 1);
  const Matrix in = config_.per_step ? state_scaler.apply(raw_inputs) : feature_scaler.apply(raw_inputs);
  const Matrix out = encoder_.eval(in);
  const int m = config_.n_modes;
  switch (config_.latent) {
    case LatentKind::Categorical:
    case LatentKind::Softmax: {
      Matrix p(out.rows(), out.cols());
      for (Eigen::Index r = 0; r < out.rows(); ++r) {
        p.row(r) = (out.row(r).array() - out.row(r).maxCoeff()).exp().matrix();
        p.row(r) /= p.row(r).sum();
      }
      return p;
    }
    case LatentKind::GaussianReparam: return out.leftCols(m);
    case LatentKind::Deterministic:
    case LatentKind::None: return out;
  }
  return out;
}

Matrix NhaRecoveryModel::eval_latent(const Matrix& raw_inputs) const {
  Matrix z = latent_mean(raw_inputs);
  if (config_.latent == LatentKind::Categorical) {
    Matrix hot = Matrix::Zero(z.rows(), z.cols());
    for (Eigen::Index r = 0; r < z.rows(); ++r) hot(r, argmax_row(z, r)) = 1.0;
    return hot;
  }
  return z;
}

Matrix NhaRecoveryModel::field_values(int i, const Matrix& x_std) const {
  return fields_.at(static_cast<std::size_t>(i)).eval(x_std);
}

Var NhaRecoveryModel::mixed_field(nn::Tape& tape, Var x_std, Var z) {
  if (!has_encoder()) return fields_.front().forward(tape, x_std);
  if (z.cols() != config_.n_modes || z.rows() != x_std.rows()) {
    throw Error(ErrorCode::ShapeMismatch, "z must be B x n_modes");
  }
  const bool affine = config_.field_hidden.empty();
  std::vector<Var> parts;
  if (affine) {
    std::vector<Var> ws, bs;
    for (auto& f : fields_) {
      ws.push_back(tape.param(f.weight(0)));
      bs.push_back(tape.param(f.bias(0)));
    }
    return nn::mix_blocks(nn::add_row(nn::matmul(x_std, nn::concat_cols(ws)), nn::concat_cols(bs)), z);
  }
  for (auto& f : fields_) parts.push_back(f.forward(tape, x_std));
  return nn::mix_blocks(nn::concat_cols(parts), z);
}

Var NhaRecoveryModel::encode(nn::Tape& tape, Var inputs_std, bool train, Rng* rng) {
  if (!has_encoder()) throw Error(ErrorCode::InvalidArgument, "model has no encoder");
  const Var out = encoder_.forward(tape, inputs_std, train, rng);
  const int m = config_.n_modes;
  switch (config_.latent) {
    case LatentKind::Categorical: {
      const Var probs = nn::softmax_rows(out);
      if (train && rng) return nn::straight_through_sample(probs, *rng).z;
      Matrix hot = Matrix::Zero(probs.rows(), probs.cols());
      for (Eigen::Index r = 0; r < hot.rows(); ++r) hot(r, argmax_row(probs.value(), r)) = 1.0;
      return nn::straight_through(probs, std::move(hot));
    }
    case LatentKind::Softmax: return nn::softmax_rows(out);
    case LatentKind::GaussianReparam: {
      const Var mu = nn::slice_cols(out, 0, m);
      if (!(train && rng)) return mu;
      const Var sigma = nn::add_scalar(nn::softplus(nn::slice_cols(out, m, m)), 1e-4);
      return nn::gaussian_reparam(mu, sigma, *rng);
    }
    case LatentKind::Deterministic:
    case LatentKind::None: return out;
  }
  return out;
}

int NhaRecoveryModel::apply_alias(int mode) const {
  if (mode_alias.empty()) return mode;
  return mode_alias.at(static_cast<std::size_t>(mode));
}

std::vector<int> NhaRecoveryModel::predict_modes(const std::vector<Subtrajectory>& segs) const {
  std::vector<int> out(segs.size(), 0);
  if (!has_encoder() || segs.empty()) return out;
  if (config_.per_step) {
    for (std::size_t i = 0; i < segs.size(); ++i) {
      const auto labels = predict_state_modes(stack_states(segs[i].states));
      std::map<int, int> counts;
      for (int l : labels) ++counts[l];
      int best = 0, bc = -1;
      for (const auto& [l, c] : counts) {
        if (c > bc) {
          bc = c;
          best = l;
        }
      }
      out[i] = best;
    }
    return out;
  }
  const Matrix z = latent_mean(segment_features(segs));
  for (std::size_t i = 0; i < segs.size(); ++i) out[i] = apply_alias(argmax_row(z, static_cast<Eigen::Index>(i)));
  return out;
}

std::vector<int> NhaRecoveryModel::predict_state_modes(const Matrix& states) const {
  if (!config_.per_step) throw Error(ErrorCode::InvalidArgument, "per-state labels need a per-step encoder");
  const Matrix z = latent_mean(states);
  std::vector<int> out(static_cast<std::size_t>(states.rows()));
  for (Eigen::Index r = 0; r < states.rows(); ++r) out[static_cast<std::size_t>(r)] = apply_alias(argmax_row(z, r));
  return out;
}

// ---------------------------------------------------------------------------
// Decoding and reconstruction

namespace {

/// Normalized mixed field at one normalized (possibly augmented) state.
Eigen::RowVectorXd mixed_eval(const NhaRecoveryModel& model, const Eigen::RowVectorXd& x_std,
                              const Eigen::RowVectorXd& z) {
  if (!model.has_encoder()) return model.field_values(0, x_std);
  Eigen::RowVectorXd out = Eigen::RowVectorXd::Zero(x_std.size());
  for (int i = 0; i < model.n_modes(); ++i) {
    if (z[i] == 0.0) continue;
    out += z[i] * model.field_values(i, x_std).row(0);
  }
  return out;
}

template <typename ZFn>
Matrix integrate_std(const NhaRecoveryModel& model, const Subtrajectory& seg, ZFn&& z_at) {
  if (seg.size() == 0) throw Error(ErrorCode::EmptyTrajectory, "empty subtrajectory");
  const int n = model.state_dim();
  const int d = model.field_dim();
  Matrix out(static_cast<Eigen::Index>(seg.size()), n);
  Eigen::RowVectorXd x = Eigen::RowVectorXd::Zero(d);
  x.head(n) = model.state_scaler.apply(seg.states.front().transpose());
  out.row(0) = x.head(n);
  for (std::size_t k = 0; k + 1 < seg.size(); ++k) {
    const double h = seg.times[k + 1] - seg.times[k];
    const Eigen::RowVectorXd z = z_at(x.head(n));
    const Eigen::RowVectorXd k1 = mixed_eval(model, x, z);
    const Eigen::RowVectorXd k2 = mixed_eval(model, x + 0.5 * h * k1, z);
    const Eigen::RowVectorXd k3 = mixed_eval(model, x + 0.5 * h * k2, z);
    const Eigen::RowVectorXd k4 = mixed_eval(model, x + h * k3, z);
    x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!x.allFinite()) throw Error(ErrorCode::NonFiniteFlow, "reconstruction left the finite range");
    out.row(static_cast<Eigen::Index>(k + 1)) = x.head(n);
  }
  return out;
}

}  // namespace

Eigen::VectorXd decode_flow(const NhaRecoveryModel& model, const Eigen::VectorXd& z, double /*t*/,
                            const Eigen::VectorXd& x) {
  if (x.size() != model.state_dim()) throw Error(ErrorCode::ShapeMismatch, "state dimension");
  if (model.has_encoder() && z.size() != model.n_modes()) throw Error(ErrorCode::ShapeMismatch, "z length");
  Eigen::RowVectorXd xs = Eigen::RowVectorXd::Zero(model.field_dim());
  xs.head(model.state_dim()) = model.state_scaler.apply(x.transpose());
  const Eigen::RowVectorXd zr = model.has_encoder() ? Eigen::RowVectorXd(z.transpose()) : Eigen::RowVectorXd();
  const Eigen::RowVectorXd f = mixed_eval(model, xs, zr).head(model.state_dim());
  return (f.array() * model.state_scaler.scale.array()).matrix().transpose();
}

Matrix reconstruct_subtrajectory(const NhaRecoveryModel& model, const Subtrajectory& seg, const Eigen::VectorXd& z) {
  if (model.has_encoder() && z.size() != model.n_modes()) throw Error(ErrorCode::ShapeMismatch, "z length");
  const Eigen::RowVectorXd zr = z.transpose();
  return model.state_scaler.invert(integrate_std(model, seg, [&](const Eigen::RowVectorXd&) { return zr; }));
}

Matrix reconstruct_per_step(const NhaRecoveryModel& model, const Subtrajectory& seg, Rng* rng) {
  if (!model.config().per_step) throw Error(ErrorCode::InvalidArgument, "model has no per-step encoder");
  const int m = model.n_modes();
  auto z_at = [&](const Eigen::RowVectorXd& x_std) {
    const Matrix probs = model.latent_mean(model.state_scaler.invert(x_std));
    Eigen::RowVectorXd z = Eigen::RowVectorXd::Zero(m);
    if (model.config().latent == LatentKind::Softmax) return Eigen::RowVectorXd(probs.row(0));
    const int k = rng ? nn::sample_categorical(probs.row(0).transpose(), *rng) : argmax_row(probs, 0);
    z[k] = 1.0;
    return z;
  };
  return model.state_scaler.invert(integrate_std(model, seg, z_at));
}

double reconstruction_mse(const NhaRecoveryModel& model, const std::vector<Subtrajectory>& segs) {
  double total = 0.0;
  int count = 0;
  Matrix z;
  if (model.has_encoder() && !model.config().per_step && !segs.empty()) z = model.eval_latent(segment_features(segs));
  for (std::size_t i = 0; i < segs.size(); ++i) {
    if (segs[i].size() < 2) continue;
    Matrix pred;
    if (model.config().per_step) {
      pred = reconstruct_per_step(model, segs[i]);
    } else if (model.has_encoder()) {
      pred = reconstruct_subtrajectory(model, segs[i], z.row(static_cast<Eigen::Index>(i)).transpose());
    } else {
      pred = reconstruct_subtrajectory(model, segs[i], Eigen::VectorXd());
    }
    const Matrix diff = model.state_scaler.apply(pred) - model.state_scaler.apply(stack_states(segs[i].states));
    total += diff.array().square().mean();
    ++count;
  }
  return count == 0 ? 0.0 : total / count;
}

// ---------------------------------------------------------------------------
// Training

namespace {

struct PreparedSegment {
  Matrix states;  // standardized
  std::vector<double> times;
  Eigen::RowVectorXd features;  // standardized
};

}  // namespace

RecoveryReport train_recovery(NhaRecoveryModel& model, const std::vector<Subtrajectory>& train,
                              const TrainConfig& config) {
  if (train.empty()) throw Error(ErrorCode::InvalidArgument, "no training segments");
  if (config.window < 2) throw Error(ErrorCode::InvalidArgument, "training window needs at least 2 samples");
  const int n = model.state_dim();
  for (const auto& s : train) {
    if (s.size() == 0 || s.states.front().size() != n) {
      throw Error(ErrorCode::ShapeMismatch, "segment state dimension does not match the model");
    }
  }

  std::vector<StateVec> all_states;
  for (const auto& s : train) all_states.insert(all_states.end(), s.states.begin(), s.states.end());
  model.state_scaler = Standardizer::fit(stack_states(all_states));
  const bool per_step = model.config().per_step;
  Matrix feats;
  if (!per_step) {
    feats = segment_features(train);
    model.feature_scaler = Standardizer::fit(feats);
    feats = model.feature_scaler.apply(feats);
  }

  std::vector<PreparedSegment> prepared;
  for (std::size_t i = 0; i < train.size(); ++i) {
    if (train[i].size() < 2) continue;
    PreparedSegment p;
    p.states = model.state_scaler.apply(stack_states(train[i].states));
    p.times = train[i].times;
    if (!per_step) p.features = feats.row(static_cast<Eigen::Index>(i));
    prepared.push_back(std::move(p));
  }
  if (prepared.empty()) throw Error(ErrorCode::InvalidArgument, "no segment has two or more samples");

  Rng rng = make_rng(config.seed, 2);
  nn::Adam enc_opt;
  if (model.has_encoder()) enc_opt = nn::Adam(model.encoder_parameters(), {.lr = config.encoder_lr});
  nn::Adam dec_opt(model.decoder_parameters(), {.lr = config.decoder_lr});

  const auto N = static_cast<int>(prepared.size());
  const int B = (config.batch_size <= 0 || config.batch_size >= N) ? N : config.batch_size;
  const int d = model.field_dim();
  std::vector<int> order(static_cast<std::size_t>(N));
  std::iota(order.begin(), order.end(), 0);

  RecoveryReport report;
  report.loss_history.reserve(static_cast<std::size_t>(config.iterations));
  nn::Tape tape;
  for (int it = 0; it < config.iterations; ++it) {
    if (B < N) {
      for (int i = 0; i < B; ++i) {
        const auto j = i + static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(N - i)));
        std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
      }
    }
    std::vector<int> starts(static_cast<std::size_t>(B)), lens(static_cast<std::size_t>(B));
    int L = 0;
    for (int b = 0; b < B; ++b) {
      const auto& seg = prepared[static_cast<std::size_t>(order[static_cast<std::size_t>(b)])];
      const int size = static_cast<int>(seg.states.rows());
      const int len = std::min(size, config.window);
      lens[static_cast<std::size_t>(b)] = len;
      starts[static_cast<std::size_t>(b)] =
          size > len ? static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(size - len + 1))) : 0;
      L = std::max(L, len);
    }

    Matrix x0 = Matrix::Zero(B, d);
    std::vector<Matrix> targets(static_cast<std::size_t>(L), Matrix::Zero(B, n));
    std::vector<Matrix> weights(static_cast<std::size_t>(L), Matrix::Zero(B, n));
    std::vector<Matrix> dts(static_cast<std::size_t>(L), Matrix::Zero(B, 1));
    Matrix enc_in;
    if (!per_step && model.has_encoder()) enc_in.resize(B, feats.cols());
    for (int b = 0; b < B; ++b) {
      const auto& seg = prepared[static_cast<std::size_t>(order[static_cast<std::size_t>(b)])];
      const int s0 = starts[static_cast<std::size_t>(b)];
      const int len = lens[static_cast<std::size_t>(b)];
      x0.row(b).head(n) = seg.states.row(s0);
      const double w = 1.0 / (static_cast<double>(len - 1) * n * B);
      for (int k = 0; k < len; ++k) {
        targets[static_cast<std::size_t>(k)].row(b) = seg.states.row(s0 + k);
        if (k > 0) {
          weights[static_cast<std::size_t>(k)].row(b).setConstant(w);
          dts[static_cast<std::size_t>(k)](b, 0) =
              seg.times[static_cast<std::size_t>(s0 + k)] - seg.times[static_cast<std::size_t>(s0 + k - 1)];
        }
      }
      if (enc_in.size() > 0) enc_in.row(b) = seg.features;
    }

    tape.clear();
    Var z;
    if (!per_step && model.has_encoder()) z = model.encode(tape, tape.constant(enc_in), true, &rng);
    Var x = tape.constant(x0);
    Var prev = model.has_encoder() ? x : nn::slice_cols(x, 0, n);
    Var loss;
    for (int k = 1; k < L; ++k) {
      const Var dt = tape.constant(dts[static_cast<std::size_t>(k)]);
      const Var half = 0.5 * dt;
      const Var sixth = (1.0 / 6.0) * dt;
      const Var zk = per_step ? model.encode(tape, x, true, &rng) : z;
      const Var k1 = model.mixed_field(tape, x, zk);
      const Var k2 = model.mixed_field(tape, x + nn::mul_col(k1, half), zk);
      const Var k3 = model.mixed_field(tape, x + nn::mul_col(k2, half), zk);
      const Var k4 = model.mixed_field(tape, x + nn::mul_col(k3, dt), zk);
      x = x + nn::mul_col(k1 + 2.0 * k2 + 2.0 * k3 + k4, sixth);
      const Var xs = model.has_encoder() ? x : nn::slice_cols(x, 0, n);
      const Var wk = tape.constant(weights[static_cast<std::size_t>(k)]);
      Var term = nn::sum(nn::square(xs - tape.constant(targets[static_cast<std::size_t>(k)])) * wk);
      if (config.fd_weight > 0.0) {
        const Matrix dtarget = targets[static_cast<std::size_t>(k)] - targets[static_cast<std::size_t>(k - 1)];
        term = term + config.fd_weight * nn::sum(nn::square((xs - prev) - tape.constant(dtarget)) * wk);
      }
      prev = xs;
      loss = loss.valid() ? loss + term : term;
    }
    const double value = loss.scalar();
    if (!std::isfinite(value)) {
      throw Error(ErrorCode::DivergedLoss, "reconstruction loss became non-finite at iteration " + std::to_string(it));
    }
    if (model.has_encoder()) enc_opt.zero_grad();
    dec_opt.zero_grad();
    tape.backward(loss);
    if (model.has_encoder()) enc_opt.step();
    dec_opt.step();
    report.loss_history.push_back(value);
    if (config.log_every > 0 && (it + 1) % config.log_every == 0) {
      std::cerr << "recover iter " << (it + 1) << " loss " << value << '\n';
    }
  }
  tape.clear();

  report.iterations = config.iterations;
  report.segment_modes = model.predict_modes(train);
  for (int l : report.segment_modes) ++report.cluster_sizes[l];
  report.train_mse = reconstruction_mse(model, train);
  return report;
}

// ---------------------------------------------------------------------------
// Serialization

std::string report_to_json(const RecoveryReport& report) {
  using detail::json;
  auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  json sizes = json::object();
  for (const auto& [k, v] : report.cluster_sizes) sizes[std::to_string(k)] = v;
  json j = {{"segment_modes", report.segment_modes},
            {"train_mse", num(report.train_mse)},
            {"val_mse", num(report.val_mse)},
            {"test_mse", num(report.test_mse)},
            {"v_measure", report.v_measure ? json(*report.v_measure) : json(nullptr)},
            {"cluster_sizes", std::move(sizes)},
            {"iterations", report.iterations},
            {"final_loss", report.loss_history.empty() ? json(nullptr) : num(report.loss_history.back())}};
  return j.dump();
}

namespace {

detail::json scaler_json(const Standardizer& s) {
  return {{"mean", detail::to_json(Eigen::VectorXd(s.mean.transpose()))},
          {"scale", detail::to_json(Eigen::VectorXd(s.scale.transpose()))}};
}

Standardizer scaler_from(const detail::json& j) {
  Standardizer s;
  s.mean = detail::vector_from_json(j.at("mean")).transpose();
  s.scale = detail::vector_from_json(j.at("scale")).transpose();
  return s;
}

}  // namespace

std::string model_to_json(const NhaRecoveryModel& model) {
  using detail::json;
  const auto& c = model.config();
  json acts = json::array();
  for (auto a : c.field_activations) acts.push_back(nn::to_string(a));
  json cfg = {{"n_modes", c.n_modes},
              {"latent", to_string(c.latent)},
              {"encoder_hidden", c.encoder_hidden},
              {"encoder_activation", nn::to_string(c.encoder_activation)},
              {"encoder_dropout", c.encoder_dropout},
              {"field_hidden", c.field_hidden},
              {"field_activations", std::move(acts)},
              {"anode_hidden", c.anode_hidden},
              {"anode_augment", c.anode_augment},
              {"per_step", c.per_step}};
  json fields = json::array();
  for (const auto& f : model.fields()) fields.push_back(detail::to_json(f));
  json j = {{"config", std::move(cfg)},
            {"state_dim", model.state_dim()},
            {"state_scaler", scaler_json(model.state_scaler)},
            {"feature_scaler", scaler_json(model.feature_scaler)},
            {"mode_alias", model.mode_alias},
            {"fields", std::move(fields)}};
  if (model.has_encoder()) j["encoder"] = detail::to_json(model.encoder());
  return j.dump();
}

NhaRecoveryModel model_from_json(const std::string& text) {
  const auto j = detail::parse(text);
  try {
    const auto& cj = j.at("config");
    ModelConfig c;
    c.n_modes = cj.at("n_modes").get<int>();
    c.latent = latent_kind_from_string(cj.at("latent").get<std::string>());
    c.encoder_hidden = cj.at("encoder_hidden").get<std::vector<int>>();
    c.encoder_activation = nn::activation_from_string(cj.at("encoder_activation").get<std::string>());
    c.encoder_dropout = cj.at("encoder_dropout").get<double>();
    c.field_hidden = cj.at("field_hidden").get<std::vector<int>>();
    for (const auto& a : cj.at("field_activations")) c.field_activations.push_back(nn::activation_from_string(a));
    c.anode_hidden = cj.at("anode_hidden").get<std::vector<int>>();
    c.anode_augment = cj.at("anode_augment").get<int>();
    c.per_step = cj.at("per_step").get<bool>();
    NhaRecoveryModel model(c, j.at("state_dim").get<int>(), 0);
    model.state_scaler = scaler_from(j.at("state_scaler"));
    model.feature_scaler = scaler_from(j.at("feature_scaler"));
    model.mode_alias = j.at("mode_alias").get<std::vector<int>>();
    const auto& fj = j.at("fields");
    if (fj.size() != model.fields().size()) throw Error(ErrorCode::Schema, "field count does not match the config");
    for (std::size_t i = 0; i < fj.size(); ++i) model.fields()[i] = detail::mlp_from_json(fj[i]);
    if (model.has_encoder()) model.encoder() = detail::mlp_from_json(j.at("encoder"));
    return model;
  } catch (const detail::json::exception& e) {
    throw Error(ErrorCode::Schema, std::string("recovery model: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Pruning

PruneReport prune_modes(NhaRecoveryModel& model, const Matrix& states, double threshold, const std::vector<int>& used) {
  const int m = model.has_encoder() ? model.n_modes() : 1;
  std::vector<int> modes = used;
  if (modes.empty()) {
    modes.resize(static_cast<std::size_t>(m));
    std::iota(modes.begin(), modes.end(), 0);
  }
  std::sort(modes.begin(), modes.end());
  modes.erase(std::unique(modes.begin(), modes.end()), modes.end());

  PruneReport report;
  report.distances = Matrix::Constant(m, m, std::numeric_limits<double>::quiet_NaN());
  const Matrix x_std = model.state_scaler.apply(states);
  std::vector<Matrix> values(static_cast<std::size_t>(m));
  for (int i : modes) {
    values[static_cast<std::size_t>(i)] =
        (model.field_values(i, x_std).leftCols(model.state_dim()).array().rowwise() *
         model.state_scaler.scale.array())
            .matrix();
  }
  std::vector<int> parent(static_cast<std::size_t>(m));
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int a) {
    while (parent[static_cast<std::size_t>(a)] != a) a = parent[static_cast<std::size_t>(a)];
    return a;
  };
  for (std::size_t a = 0; a < modes.size(); ++a) {
    report.distances(modes[a], modes[a]) = 0.0;
    for (std::size_t b = a + 1; b < modes.size(); ++b) {
      const int i = modes[a], j = modes[b];
      const double dist = states.rows() == 0
                              ? 0.0
                              : (values[static_cast<std::size_t>(i)] - values[static_cast<std::size_t>(j)])
                                    .cwiseAbs()
                                    .rowwise()
                                    .sum()
                                    .mean();
      report.distances(i, j) = dist;
      report.distances(j, i) = dist;
      if (dist < threshold) {
        report.merges.emplace_back(i, j, dist);
        const int ri = find(i), rj = find(j);
        if (ri != rj) parent[static_cast<std::size_t>(std::max(ri, rj))] = std::min(ri, rj);
      }
    }
  }
  report.alias.resize(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) report.alias[static_cast<std::size_t>(i)] = find(i);
  std::set<int> roots;
  for (int i : modes) roots.insert(report.alias[static_cast<std::size_t>(i)]);
  report.n_modes_after = static_cast<int>(roots.size());
  model.mode_alias = report.alias;
  return report;
}

// ---------------------------------------------------------------------------
// Event supervision and label helpers

EventSupervision collect_event_supervision(const std::vector<Subtrajectory>& segments) {
  std::vector<std::string> parent_order;
  std::unordered_map<std::string, std::vector<const Subtrajectory*>> by_parent;
  for (const auto& s : segments) {
    auto [it, inserted] = by_parent.try_emplace(s.parent_id);
    if (inserted) parent_order.push_back(s.parent_id);
    it->second.push_back(&s);
  }
  EventSupervision out;
  for (const auto& id : parent_order) {
    auto& segs = by_parent[id];
    std::stable_sort(segs.begin(), segs.end(),
                     [](const Subtrajectory* a, const Subtrajectory* b) { return a->start_idx < b->start_idx; });
    for (std::size_t i = 0; i + 1 < segs.size(); ++i) {
      const auto& a = *segs[i];
      const auto& b = *segs[i + 1];
      if (!a.recovered_mode || !b.recovered_mode) {
        throw Error(ErrorCode::InvalidArgument, "segment of '" + id + "' has no recovered mode");
      }
      EventSample e;
      e.tau = a.times.back() - a.times.front();
      e.t_start = a.times.front();
      e.t_event = b.times.front();
      e.x_start = a.states.front();
      e.x_pre = a.states.back();
      e.x_post = b.states.front();
      out[{a.recovered_mode->index, b.recovered_mode->index}].push_back(std::move(e));
    }
  }
  return out;
}

std::size_t supervision_size(const EventSupervision& sup) {
  std::size_t n = 0;
  for (const auto& [edge, v] : sup) n += v.size();
  return n;
}

std::vector<int> expand_to_samples(const std::vector<Subtrajectory>& segs, const std::vector<int>& segment_labels) {
  if (segs.size() != segment_labels.size()) throw Error(ErrorCode::LengthMismatch, "one label per segment");
  std::vector<int> out;
  for (std::size_t i = 0; i < segs.size(); ++i) out.insert(out.end(), segs[i].size(), segment_labels[i]);
  return out;
}

namespace {

std::unordered_map<std::string, const Trajectory*> index_parents(const std::vector<Trajectory>& parents) {
  std::unordered_map<std::string, const Trajectory*> idx;
  for (const auto& p : parents) {
    if (!p.modes) throw Error(ErrorCode::InvalidArgument, "trajectory '" + p.id + "' has no mode labels");
    idx[p.id] = &p;
  }
  return idx;
}

const Trajectory& parent_of(const std::unordered_map<std::string, const Trajectory*>& idx, const Subtrajectory& s) {
  const auto it = idx.find(s.parent_id);
  if (it == idx.end()) throw Error(ErrorCode::InvalidArgument, "unknown parent '" + s.parent_id + "'");
  return *it->second;
}

}  // namespace

std::vector<int> true_sample_modes(const std::vector<Subtrajectory>& segs, const std::vector<Trajectory>& parents) {
  const auto idx = index_parents(parents);
  std::vector<int> out;
  for (const auto& s : segs) {
    const auto& p = parent_of(idx, s);
    for (std::size_t i = s.start_idx; i < s.end_idx; ++i) out.push_back((*p.modes)[i].index);
  }
  return out;
}

std::vector<int> true_segment_modes(const std::vector<Subtrajectory>& segs, const std::vector<Trajectory>& parents) {
  const auto idx = index_parents(parents);
  std::vector<int> out;
  out.reserve(segs.size());
  for (const auto& s : segs) out.push_back(majority_mode(*parent_of(idx, s).modes, s.start_idx, s.end_idx).index);
  return out;
}

}  // namespace hal::recovery
