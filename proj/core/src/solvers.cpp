#include "hal/solvers.hpp"

#include "hal/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace hal {

namespace {

StateVec eval(const Flow& flow, double t, const StateVec& x) {
  StateVec f = flow(t, x);
  if (f.size() != x.size()) throw Error(ErrorCode::ShapeMismatch, "flow returned wrong dimension");
  if (!f.allFinite()) throw Error(ErrorCode::NonFiniteFlow, "flow evaluated to NaN/Inf at t=" + std::to_string(t));
  return f;
}

double rms(const Eigen::ArrayXd& v) { return v.size() == 0 ? 0.0 : std::sqrt(v.square().mean()); }

// Dormand-Prince 5(4) coefficients.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                 e6 = 22.0 / 525, e7 = -1.0 / 40;

}  // namespace

void SolverConfig::validate() const {
  if (!(atol > 0.0) || !(rtol > 0.0) || !(event_tol > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "atol, rtol and event_tol must be positive");
  }
  if (max_root_iters < 1) throw Error(ErrorCode::InvalidArgument, "max_root_iters must be positive");
  if (!(min_factor < 1.0) || !(max_factor > 1.0) || !(min_factor > 0.0) || !(safety > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "step adaptation requires 0 < min_factor < 1 < max_factor");
  }
  if (dt_init && !(*dt_init > 0.0)) throw Error(ErrorCode::InvalidArgument, "dt_init must be positive");
  if (output_dt && !(*output_dt > 0.0)) throw Error(ErrorCode::InvalidArgument, "output_dt must be positive");
}

StateVec step_rk4(const Flow& flow, double t, const StateVec& x, double dt) {
  const StateVec k1 = eval(flow, t, x);
  const StateVec k2 = eval(flow, t + 0.5 * dt, x + 0.5 * dt * k1);
  const StateVec k3 = eval(flow, t + 0.5 * dt, x + 0.5 * dt * k2);
  const StateVec k4 = eval(flow, t + dt, x + dt * k3);
  return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

DopriStep step_dopri(const Flow& flow, double t, const StateVec& x, double dt, const StateVec* k1_in) {
  const StateVec k1 = k1_in ? *k1_in : eval(flow, t, x);
  const StateVec k2 = eval(flow, t + c2 * dt, x + dt * (a21 * k1));
  const StateVec k3 = eval(flow, t + c3 * dt, x + dt * (a31 * k1 + a32 * k2));
  const StateVec k4 = eval(flow, t + c4 * dt, x + dt * (a41 * k1 + a42 * k2 + a43 * k3));
  const StateVec k5 = eval(flow, t + c5 * dt, x + dt * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
  const StateVec k6 = eval(flow, t + dt, x + dt * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
  DopriStep out;
  out.x_next = x + dt * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
  out.k_last = eval(flow, t + dt, out.x_next);
  out.err = dt * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * out.k_last);
  return out;
}

double error_ratio(const StateVec& x, const StateVec& x_next, const StateVec& err, double atol, double rtol) {
  const Eigen::ArrayXd scale = atol + rtol * x.array().abs().max(x_next.array().abs());
  return err.size() == 0 ? 0.0 : (err.array().abs() / scale).maxCoeff();
}

double adapt_step(double dt, double ratio, double safety, double min_factor, double max_factor, int order) {
  if (ratio <= 0.0) return dt * max_factor;
  if (!std::isfinite(ratio)) return dt * min_factor;
  const double factor = safety * std::pow(ratio, -1.0 / (order + 1));
  return dt * std::clamp(factor, min_factor, max_factor);
}

double initial_step_size(const Flow& flow, double t0, const StateVec& x0, const StateVec& f0, int order, double atol,
                         double rtol) {
  const Eigen::ArrayXd scale = atol + x0.array().abs() * rtol;
  const double d0 = rms(x0.array() / scale);
  const double d1 = rms(f0.array() / scale);
  const double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
  const StateVec x1 = x0 + h0 * f0;
  const StateVec f1 = eval(flow, t0 + h0, x1);
  const double d2 = rms((f1 - f0).array() / scale) / h0;
  const double h1 = (d1 <= 1e-15 && d2 <= 1e-15) ? std::max(1e-6, h0 * 1e-3)
                                                 : std::pow(0.01 / std::max(d1, d2), 1.0 / (order + 1));
  return std::min(100.0 * h0, h1);
}

Trajectory integrate_fixed(const Flow& flow, const StateVec& x0, double t0, double t1, double h, Method method) {
  if (!(h > 0.0)) throw Error(ErrorCode::InvalidArgument, "step must be positive");
  if (!(t1 >= t0)) throw Error(ErrorCode::InvalidArgument, "t_span must be increasing");
  Trajectory out;
  out.times.push_back(t0);
  out.states.push_back(x0);
  const auto n = static_cast<long long>(std::ceil((t1 - t0) / h - 1e-9));
  StateVec x = x0;
  for (long long k = 0; k < n; ++k) {
    const double t = t0 + static_cast<double>(k) * h;
    const double t_next = (k + 1 == n) ? t1 : t0 + static_cast<double>(k + 1) * h;
    const double dt = t_next - t;
    x = method == Method::RK4 ? step_rk4(flow, t, x, dt) : step_dopri(flow, t, x, dt).x_next;
    out.times.push_back(t_next);
    out.states.push_back(x);
  }
  return out;
}

Trajectory odeint(const Flow& flow, const StateVec& x0, double t0, double t1, const SolverConfig& config,
                  StepStats* stats) {
  config.validate();
  if (!std::isfinite(t0) || !std::isfinite(t1) || t1 < t0) {
    throw Error(ErrorCode::InvalidArgument, "t_span must be finite and increasing");
  }
  if (config.method == Method::RK4) {
    auto out = integrate_fixed(flow, x0, t0, t1, config.dt_init.value_or(0.01), Method::RK4);
    if (stats) {
      stats->accepted += out.size() - 1;
      stats->fevals += 4 * (out.size() - 1);
    }
    return out;
  }

  Trajectory out;
  out.times.push_back(t0);
  out.states.push_back(x0);
  if (t1 == t0) return out;

  StepStats local;
  StateVec x = x0;
  double t = t0;
  StateVec k1 = eval(flow, t, x);
  ++local.fevals;
  double dt = config.dt_init ? *config.dt_init : initial_step_size(flow, t, x, k1, 4, config.atol, config.rtol);
  local.fevals += 1;

  const bool gridded = config.output_dt.has_value();
  long long next_k = 1;
  auto grid_time = [&](long long k) { return std::min(t1, t0 + static_cast<double>(k) * config.output_dt.value_or(1.0)); };

  std::size_t steps = 0;
  while (t < t1) {
    if (++steps > config.max_steps) throw Error(ErrorCode::StepUnderflow, "max_steps exceeded");
    double target = t1;
    if (gridded) {
      while (grid_time(next_k) <= t) ++next_k;
      target = grid_time(next_k);
    }
    const bool last = dt * (1.0 + 1e-6) >= target - t;
    const double h = last ? target - t : dt;
    if (h < 1e3 * std::numeric_limits<double>::epsilon() * std::max(std::abs(t), 1.0)) {
      throw Error(ErrorCode::StepUnderflow, "step size underflow at t=" + std::to_string(t));
    }
    auto step = step_dopri(flow, t, x, h, &k1);
    local.fevals += 6;
    const double ratio = error_ratio(x, step.x_next, step.err, config.atol, config.rtol);
    if (ratio <= 1.0) {
      t = last ? target : t + h;
      x = std::move(step.x_next);
      k1 = std::move(step.k_last);
      ++local.accepted;
      if (!gridded || last) {
        out.times.push_back(t);
        out.states.push_back(x);
      }
    } else {
      ++local.rejected;
    }
    dt = adapt_step(h, ratio, config.safety, config.min_factor, config.max_factor, 4);
  }
  if (stats) {
    stats->accepted += local.accepted;
    stats->rejected += local.rejected;
    stats->fevals += local.fevals;
  }
  return out;
}

EventLocation locate_event(const Flow& flow, const ScalarField& condition, double t_lo, const StateVec& x_lo,
                           double t_hi, const StateVec& x_hi, const SolverConfig& config) {
  const double g_lo = condition(t_lo, x_lo);
  const double g_hi = condition(t_hi, x_hi);
  const bool s_lo = g_lo >= 0.0;
  if (s_lo == (g_hi >= 0.0)) throw Error(ErrorCode::NoSignChange, "condition has the same sign at both ends");

  auto advance = [&](double t_to) {
    const double h = t_to - t_lo;
    return config.method == Method::RK4 ? step_rk4(flow, t_lo, x_lo, h) : step_dopri(flow, t_lo, x_lo, h).x_next;
  };

  double lo = t_lo;
  double hi = t_hi;
  StateVec x_right = x_hi;
  EventLocation loc;
  while (hi - lo >= config.event_tol) {
    if (loc.iterations >= config.max_root_iters) {
      loc.converged = false;
      break;
    }
    ++loc.iterations;
    const double mid = 0.5 * (lo + hi);
    StateVec x_mid = advance(mid);
    if ((condition(mid, x_mid) >= 0.0) != s_lo) {
      hi = mid;
      x_right = std::move(x_mid);
    } else {
      lo = mid;
    }
  }
  loc.t = hi;
  loc.x = std::move(x_right);
  return loc;
}

}  // namespace hal
