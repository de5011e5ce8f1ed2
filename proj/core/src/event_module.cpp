#include "hal/event_module.hpp"

#include "hal/error.hpp"
#include "hal/optim.hpp"
#include "json_detail.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>

namespace hal::events {

std::string edge_key(const Edge& e) { return std::to_string(e.first) + "->" + std::to_string(e.second); }

Edge edge_from_key(const std::string& key) {
  const auto pos = key.find("->");
  if (pos == std::string::npos) throw Error(ErrorCode::Schema, "edge key '" + key + "' is not of the form z->z'");
  try {
    return {std::stoi(key.substr(0, pos)), std::stoi(key.substr(pos + 2))};
  } catch (const std::exception&) {
    throw Error(ErrorCode::Schema, "edge key '" + key + "' is not of the form z->z'");
  }
}

// ---------------------------------------------------------------------------
// JumpNet

JumpNet::JumpNet(int state_dim, int hidden, Rng& rng)
    : input_(recovery::Standardizer::identity(state_dim)), out_scale_(Eigen::RowVectorXd::Ones(state_dim)) {
  nn::MlpSpec spec;
  spec.layer_dims = {state_dim, hidden, state_dim};
  spec.activation = nn::Activation::Softplus;
  mlp_ = nn::Mlp(spec, rng);
  mlp_.weight(1).value.setZero();
  mlp_.bias(1).value.setZero();
}

JumpNet::JumpNet(nn::Mlp mlp, recovery::Standardizer input, Eigen::RowVectorXd out_scale)
    : mlp_(std::move(mlp)), input_(std::move(input)), out_scale_(std::move(out_scale)) {
  if (input_.mean.size() != mlp_.input_dim() || out_scale_.size() != mlp_.output_dim()) {
    throw Error(ErrorCode::ShapeMismatch, "jump net scaler widths");
  }
}

void JumpNet::fit_scalers(const Matrix& x_pre, const Matrix& x_post) {
  if (x_pre.rows() == 0) return;
  input_ = recovery::Standardizer::fit(x_pre);
  const Matrix res = x_post - x_pre;
  const Eigen::RowVectorXd mean = res.colwise().mean();
  const Eigen::RowVectorXd rms =
      ((res.rowwise() - mean).array().square().colwise().mean() + mean.array().square()).sqrt().matrix();
  out_scale_ = rms;
  for (Eigen::Index j = 0; j < out_scale_.size(); ++j) {
    if (!(out_scale_[j] > 1e-12)) out_scale_[j] = 1e-6;
  }
}

Matrix JumpNet::apply(const Matrix& rows) const {
  const Matrix r = mlp_.eval(input_.apply(rows));
  return rows + (r.array().rowwise() * out_scale_.array()).matrix();
}

Eigen::VectorXd JumpNet::apply(const Eigen::VectorXd& x) const {
  return apply(Matrix(x.transpose())).row(0).transpose();
}

nn::Var JumpNet::forward(nn::Tape& tape, const Matrix& rows) {
  const nn::Var r = mlp_.forward(tape, tape.constant(input_.apply(rows)));
  return tape.constant(rows) + nn::mul_row(r, tape.constant(out_scale_));
}

// ---------------------------------------------------------------------------
// EventModule

EventModule::EventModule(int n_modes, int state_dim, EventModuleConfig config)
    : n_modes_(n_modes), state_dim_(state_dim), config_(std::move(config)) {
  if (n_modes < 1 || state_dim < 1) throw Error(ErrorCode::InvalidArgument, "event module needs modes and states");
  state_scaler = recovery::Standardizer::identity(state_dim);
}

int EventModule::cond_dim() const noexcept {
  return n_modes_ * n_modes_ + (config_.condition_on_state ? state_dim_ + 1 : 0);
}

std::vector<Edge> EventModule::edges() const {
  std::vector<Edge> out;
  for (const auto& [e, f] : flows_) out.push_back(e);
  return out;
}

std::vector<Edge> EventModule::outgoing(int z) const {
  std::vector<Edge> out;
  for (const auto& [e, f] : flows_) {
    if (e.first == z) out.push_back(e);
  }
  return out;
}

void EventModule::add_edge(const Edge& e, Rng& rng) {
  if (e.first < 0 || e.first >= n_modes_ || e.second < 0 || e.second >= n_modes_) {
    throw Error(ErrorCode::InvalidArgument, "edge " + edge_key(e) + " is outside the mode range");
  }
  flows_.insert_or_assign(e, flow::SplineFlow(config_.flow, cond_dim(), rng));
  jumps_.insert_or_assign(e, JumpNet(state_dim_, config_.jump_hidden, rng));
}

flow::SplineFlow& EventModule::flow(const Edge& e) {
  const auto it = flows_.find(e);
  if (it == flows_.end()) throw Error(ErrorCode::InvalidArgument, "no flow for edge " + edge_key(e));
  return it->second;
}

const flow::SplineFlow& EventModule::flow(const Edge& e) const {
  const auto it = flows_.find(e);
  if (it == flows_.end()) throw Error(ErrorCode::InvalidArgument, "no flow for edge " + edge_key(e));
  return it->second;
}

JumpNet& EventModule::jump(const Edge& e) {
  const auto it = jumps_.find(e);
  if (it == jumps_.end()) throw Error(ErrorCode::InvalidArgument, "no jump net for edge " + edge_key(e));
  return it->second;
}

const JumpNet& EventModule::jump(const Edge& e) const {
  const auto it = jumps_.find(e);
  if (it == jumps_.end()) throw Error(ErrorCode::InvalidArgument, "no jump net for edge " + edge_key(e));
  return it->second;
}

Eigen::RowVectorXd EventModule::conditioning(const Edge& e, const Eigen::VectorXd& x, double t) const {
  Eigen::RowVectorXd c = Eigen::RowVectorXd::Zero(cond_dim());
  c[e.first * n_modes_ + e.second] = 1.0;
  if (config_.condition_on_state) {
    if (x.size() != state_dim_) throw Error(ErrorCode::ShapeMismatch, "conditioning state dimension");
    c.segment(n_modes_ * n_modes_, state_dim_) = state_scaler.apply(x.transpose());
    c[cond_dim() - 1] = t / time_scale;
  }
  return c;
}

double EventModule::log_density(const Edge& e, double tau, const Eigen::VectorXd& x, double t) const {
  return flow(e).log_density(tau, conditioning(e, x, t));
}

double EventModule::sample_tau(const Edge& e, const Eigen::VectorXd& x, double t, Rng& rng) const {
  return flow(e).sample(conditioning(e, x, t), rng);
}

Eigen::VectorXd EventModule::apply_jump(const Edge& e, const Eigen::VectorXd& x) const { return jump(e).apply(x); }

// ---------------------------------------------------------------------------
// Training and evaluation

namespace {

Matrix rows_of(const std::vector<recovery::EventSample>& v, Eigen::VectorXd recovery::EventSample::*field) {
  Matrix out(static_cast<Eigen::Index>(v.size()), v.empty() ? 0 : (v.front().*field).size());
  for (std::size_t i = 0; i < v.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = (v[i].*field).transpose();
  return out;
}

}  // namespace

EventEvaluation train_event_module(EventModule& module, const EventSupervision& train) {
  if (recovery::supervision_size(train) == 0) throw Error(ErrorCode::NoSupervision, "no event supervision");
  const auto& cfg = module.config();
  Rng rng = make_rng(cfg.seed, 3);

  if (cfg.condition_on_state) {
    std::vector<Eigen::VectorXd> xs;
    double tmax = 0.0;
    for (const auto& [e, v] : train) {
      for (const auto& s : v) {
        xs.push_back(s.x_start);
        tmax = std::max(tmax, std::abs(s.t_start));
      }
    }
    Matrix rows(static_cast<Eigen::Index>(xs.size()), module.state_dim());
    for (std::size_t i = 0; i < xs.size(); ++i) rows.row(static_cast<Eigen::Index>(i)) = xs[i].transpose();
    module.state_scaler = recovery::Standardizer::fit(rows);
    module.time_scale = tmax > 0.0 ? tmax : 1.0;
  }

  for (const auto& [edge, samples] : train) {
    if (samples.empty()) continue;
    if (!module.has_edge(edge)) module.add_edge(edge, rng);
    auto& flow = module.flow(edge);
    auto& jump = module.jump(edge);

    std::vector<double> taus;
    std::vector<Eigen::RowVectorXd> conds;
    for (const auto& s : samples) {
      if (!(s.tau > 0.0)) continue;
      taus.push_back(s.tau);
      conds.push_back(module.conditioning(edge, s.x_start, s.t_start));
    }
    if (!taus.empty()) {
      const Eigen::VectorXd tau_vec =
          Eigen::Map<const Eigen::VectorXd>(taus.data(), static_cast<Eigen::Index>(taus.size()));
      Matrix cond(static_cast<Eigen::Index>(conds.size()), module.cond_dim());
      for (std::size_t i = 0; i < conds.size(); ++i) cond.row(static_cast<Eigen::Index>(i)) = conds[i];
      const flow::FitConfig fit{.iterations = cfg.iterations, .lr = cfg.lr, .data_init = true, .log_every = cfg.log_every};
      flow::fit_flow(flow, tau_vec, cond, fit);
    }

    // Jump regression in units of the residual scale.
    const Matrix x_pre = rows_of(samples, &recovery::EventSample::x_pre);
    const Matrix x_post = rows_of(samples, &recovery::EventSample::x_post);
    jump.fit_scalers(x_pre, x_post);
    const Eigen::RowVectorXd inv_out = jump.out_scale().cwiseInverse();
    nn::Adam opt(jump.mlp().parameter_ptrs(), {.lr = cfg.lr});
    nn::Tape tape;
    for (int it = 0; it < cfg.iterations; ++it) {
      tape.clear();
      const nn::Var pred = jump.forward(tape, x_pre);
      const nn::Var err = nn::mul_row(pred - tape.constant(x_post), tape.constant(inv_out));
      const nn::Var loss = nn::mean(nn::square(err));
      const double value = loss.scalar();
      if (!std::isfinite(value)) {
        throw Error(ErrorCode::DivergedLoss,
                    "jump loss for edge " + edge_key(edge) + " became non-finite at iteration " + std::to_string(it));
      }
      opt.zero_grad();
      tape.backward(loss);
      opt.step();
      if (cfg.log_every > 0 && (it + 1) % cfg.log_every == 0) {
        std::cerr << "jump " << edge_key(edge) << " iter " << (it + 1) << " mse " << value << '\n';
      }
    }
  }
  return evaluate_event_module(module, train);
}

EventEvaluation evaluate_event_module(const EventModule& module, const EventSupervision& test) {
  EventEvaluation out;
  double nll_sum = 0.0, mse_sum = 0.0;
  for (const auto& [edge, samples] : test) {
    EdgeMetrics m;
    m.n = static_cast<int>(samples.size());
    if (samples.empty()) continue;
    double nll = 0.0, mse = 0.0;
    int n_nll = 0;
    const bool known = module.has_edge(edge);
    for (const auto& s : samples) {
      if (known && s.tau > 0.0) {
        nll -= module.log_density(edge, s.tau, s.x_start, s.t_start);
        ++n_nll;
      }
      const Eigen::VectorXd pred = known ? module.apply_jump(edge, s.x_pre) : s.x_pre;
      mse += (pred - s.x_post).squaredNorm() / static_cast<double>(s.x_post.size());
    }
    m.nll = n_nll > 0 ? nll / n_nll : std::numeric_limits<double>::quiet_NaN();
    m.jump_mse = mse / static_cast<double>(samples.size());
    nll_sum += nll;
    out.n_nll += n_nll;
    mse_sum += mse;
    out.n_jump += m.n;
    out.edges[edge] = m;
  }
  out.pooled_nll = out.n_nll > 0 ? nll_sum / out.n_nll : std::numeric_limits<double>::quiet_NaN();
  out.pooled_jump_mse = out.n_jump > 0 ? mse_sum / out.n_jump : std::numeric_limits<double>::quiet_NaN();
  return out;
}

// ---------------------------------------------------------------------------
// Sampling and closed-loop simulation

NextEvent sample_next_event(const EventModule& module, int z, double t_k, const Eigen::VectorXd& x, Rng& rng) {
  const auto out_edges = module.outgoing(z);
  if (out_edges.empty()) throw Error(ErrorCode::NoOutgoingEdges, "mode " + std::to_string(z) + " has no outgoing edge");
  NextEvent best;
  best.tau = std::numeric_limits<double>::infinity();
  for (const auto& e : out_edges) {
    const double tau = module.sample_tau(e, x, t_k, rng);
    if (tau < best.tau) {
      best.tau = tau;
      best.target = e.second;
    }
  }
  best.time = t_k + best.tau;
  return best;
}

namespace {

Eigen::VectorXd rk4_step(const recovery::NhaRecoveryModel& model, const Eigen::VectorXd& z, double t,
                         const Eigen::VectorXd& x, double h) {
  const Eigen::VectorXd k1 = recovery::decode_flow(model, z, t, x);
  const Eigen::VectorXd k2 = recovery::decode_flow(model, z, t + 0.5 * h, x + 0.5 * h * k1);
  const Eigen::VectorXd k3 = recovery::decode_flow(model, z, t + 0.5 * h, x + 0.5 * h * k2);
  const Eigen::VectorXd k4 = recovery::decode_flow(model, z, t + h, x + h * k3);
  Eigen::VectorXd out = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  if (!out.allFinite()) throw Error(ErrorCode::NonFiniteFlow, "decoder produced a non-finite state");
  return out;
}

}  // namespace

HybridSolution simulate_nha(const recovery::NhaRecoveryModel& model, const EventModule& module,
                            const Eigen::VectorXd& x0, int z0, double t0, double horizon, Rng& rng,
                            const NhaSimConfig& config) {
  if (!(config.dt > 0.0)) throw Error(ErrorCode::InvalidArgument, "simulation step must be positive");
  if (!(horizon >= 0.0)) throw Error(ErrorCode::InvalidArgument, "horizon must be non-negative");
  const double t_end = t0 + horizon;
  const int m = model.has_encoder() ? model.n_modes() : 1;
  auto one_hot = [&](int z) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(m);
    v[std::clamp(z, 0, m - 1)] = 1.0;
    return v;
  };
  const auto max_events = static_cast<std::size_t>(config.max_events_per_unit_time * std::max(1.0, horizon));

  HybridSolution sol;
  auto& traj = sol.trajectory;
  traj.modes.emplace();
  traj.event_times.emplace();
  auto record = [&](double t, const Eigen::VectorXd& x, int z) {
    traj.times.push_back(t);
    traj.states.push_back(x);
    traj.modes->push_back(ModeId(z));
  };

  double t = t0;
  Eigen::VectorXd x = x0;
  int z = z0;
  double interval_begin = t0;
  record(t, x, z);
  NextEvent next = module.outgoing(z).empty() ? NextEvent{std::numeric_limits<double>::infinity(), 0.0, z}
                                              : sample_next_event(module, z, t, x, rng);
  std::size_t grid_k = 1;
  while (t < t_end) {
    const double grid_t = t0 + static_cast<double>(grid_k) * config.dt;
    const double target = std::min({grid_t, next.time, t_end});
    if (target > t) x = rk4_step(model, one_hot(z), t, x, target - t);
    t = target;
    if (t >= grid_t) ++grid_k;
    if (t == next.time && t <= t_end) {
      record(t, x, z);
      const Edge e{z, next.target};
      x = module.has_edge(e) ? module.apply_jump(e, x) : x;
      sol.events.push_back({t, ModeId(z), ModeId(next.target), 0});
      sol.mode_timeline.push_back({interval_begin, t, ModeId(z)});
      interval_begin = t;
      traj.event_times->push_back(t);
      z = next.target;
      record(t, x, z);
      if (sol.events.size() > max_events) {
        throw Error(ErrorCode::ZenoGuard, "more than " + std::to_string(max_events) + " events in the horizon");
      }
      next = module.outgoing(z).empty() ? NextEvent{std::numeric_limits<double>::infinity(), 0.0, z}
                                        : sample_next_event(module, z, t, x, rng);
    } else if (t == grid_t || t == t_end) {
      if (traj.times.back() != t) record(t, x, z);
    }
  }
  sol.mode_timeline.push_back({interval_begin, t_end, ModeId(z)});
  return sol;
}

DwellStatistics dwell_statistics(const std::vector<Trajectory>& trajectories) {
  DwellStatistics out;
  std::map<int, double> total;
  for (const auto& tr : trajectories) {
    if (!tr.modes || !tr.event_times || tr.size() == 0) continue;
    std::vector<double> starts{tr.times.front()};
    starts.insert(starts.end(), tr.event_times->begin(), tr.event_times->end());
    auto mode_at = [&](double s) {
      const auto it = std::upper_bound(tr.times.begin(), tr.times.end(), s);
      const auto idx = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, (it - tr.times.begin()) - 1));
      return (*tr.modes)[idx].index;
    };
    for (std::size_t i = 0; i + 1 < starts.size(); ++i) {
      const int z = mode_at(starts[i]);
      const int z_next = mode_at(starts[i + 1]);
      total[z] += starts[i + 1] - starts[i];
      ++out.dwell_count[z];
      ++out.edge_count[{z, z_next}];
    }
  }
  for (const auto& [z, sum] : total) out.mean_dwell[z] = sum / out.dwell_count[z];
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

std::string module_to_json(const EventModule& module) {
  using detail::json;
  const auto& c = module.config();
  json edges = json::object();
  for (const auto& e : module.edges()) {
    const auto& f = module.flow(e);
    const auto& jn = module.jump(e);
    edges[edge_key(e)] = {
        {"flow", {{"conditioner", detail::to_json(f.conditioner())}, {"shift", f.shift()}, {"log_scale", f.log_scale()}}},
        {"jump",
         {{"mlp", detail::to_json(jn.mlp())},
          {"in_mean", detail::to_json(Eigen::VectorXd(jn.input_scaler().mean.transpose()))},
          {"in_scale", detail::to_json(Eigen::VectorXd(jn.input_scaler().scale.transpose()))},
          {"out_scale", detail::to_json(Eigen::VectorXd(jn.out_scale().transpose()))}}}};
  }
  json j = {{"n_modes", module.n_modes()},
            {"state_dim", module.state_dim()},
            {"config",
             {{"n_layers", c.flow.n_layers},
              {"n_bins", c.flow.n_bins},
              {"tail_bound", c.flow.tail_bound},
              {"conditioner_hidden", c.flow.conditioner_hidden},
              {"condition_on_state", c.condition_on_state},
              {"jump_hidden", c.jump_hidden}}},
            {"state_mean", detail::to_json(Eigen::VectorXd(module.state_scaler.mean.transpose()))},
            {"state_scale", detail::to_json(Eigen::VectorXd(module.state_scaler.scale.transpose()))},
            {"time_scale", module.time_scale},
            {"edges", std::move(edges)}};
  return j.dump();
}

EventModule module_from_json(const std::string& text) {
  const auto j = detail::parse(text);
  try {
    EventModuleConfig c;
    const auto& cj = j.at("config");
    c.flow.n_layers = cj.at("n_layers").get<int>();
    c.flow.n_bins = cj.at("n_bins").get<int>();
    c.flow.tail_bound = cj.at("tail_bound").get<double>();
    c.flow.conditioner_hidden = cj.at("conditioner_hidden").get<std::vector<int>>();
    c.condition_on_state = cj.at("condition_on_state").get<bool>();
    c.jump_hidden = cj.at("jump_hidden").get<int>();
    EventModule module(j.at("n_modes").get<int>(), j.at("state_dim").get<int>(), c);
    module.state_scaler.mean = detail::vector_from_json(j.at("state_mean")).transpose();
    module.state_scaler.scale = detail::vector_from_json(j.at("state_scale")).transpose();
    module.time_scale = j.at("time_scale").get<double>();
    Rng rng(0);
    for (const auto& [key, ej] : j.at("edges").items()) {
      const Edge e = edge_from_key(key);
      module.add_edge(e, rng);
      const auto& fj = ej.at("flow");
      module.flow(e) = flow::SplineFlow(c.flow, detail::mlp_from_json(fj.at("conditioner")),
                                        fj.at("shift").get<double>(), fj.at("log_scale").get<double>());
      const auto& jj = ej.at("jump");
      recovery::Standardizer in;
      in.mean = detail::vector_from_json(jj.at("in_mean")).transpose();
      in.scale = detail::vector_from_json(jj.at("in_scale")).transpose();
      module.jump(e) = JumpNet(detail::mlp_from_json(jj.at("mlp")), std::move(in),
                               detail::vector_from_json(jj.at("out_scale")).transpose());
    }
    return module;
  } catch (const detail::json::exception& e) {
    throw Error(ErrorCode::Schema, std::string("event module: ") + e.what());
  }
}

std::string evaluation_to_json(const EventEvaluation& eval) {
  using detail::json;
  auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  json edges = json::object();
  for (const auto& [e, m] : eval.edges) edges[edge_key(e)] = {{"n", m.n}, {"nll", num(m.nll)}, {"jump_mse", num(m.jump_mse)}};
  return json{{"edges", std::move(edges)},
              {"pooled_nll", num(eval.pooled_nll)},
              {"pooled_jump_mse", num(eval.pooled_jump_mse)},
              {"n_nll", eval.n_nll},
              {"n_jump", eval.n_jump}}
      .dump();
}

}  // namespace hal::events
