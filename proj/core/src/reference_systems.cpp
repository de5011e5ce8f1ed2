#include "hal/reference_systems.hpp"

#include "hal/error.hpp"

#include <cmath>
#include <numbers>

namespace hal::systems {

void TcpParams::validate() const {
  if (!(tau_off > 0.0) || !(eta > 0.0) || n_ack <= 0 || !(kappa > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "TCP parameters must be positive");
  }
  if (!(p_drop > 0.0 && p_drop < 1.0)) throw Error(ErrorCode::InvalidArgument, "p_drop must lie in (0, 1)");
}

HybridSystemDef make_tcp_reno(const TcpParams& p) {
  p.validate();
  HybridSystemDef sys;
  sys.name = "tcp-reno";
  sys.n_modes = 3;
  sys.state_dim = 2;
  sys.mode_names = {"ss", "ca", "off"};
  const double ln2 = std::numbers::ln2;
  sys.flows = {
      [p, ln2](double, const StateVec& x) {
        StateVec dx(2);
        dx << p.eta * x(0) * ln2, p.kappa * x(0);
        return dx;
      },
      [p](double, const StateVec& x) {
        StateVec dx(2);
        dx << p.eta / p.n_ack, p.kappa * x(0);
        return dx;
      },
      [](double, const StateVec&) { return StateVec(StateVec::Zero(2)); },
  };

  const ScalarField drop = [p](double, const StateVec& x) { return p.p_drop * p.kappa * std::max(x(0), 0.0); };
  const ScalarField timeout = [p](double, const StateVec& x) {
    return 0.25 * p.p_drop * p.kappa * std::max(x(0), 0.0);
  };
  const ScalarField recover = [p](double, const StateVec&) { return 1.0 / p.tau_off; };
  const JumpMap halve = [](double, const StateVec& x) {
    StateVec y = x;
    y(0) = 0.5 * x(0);
    return y;
  };
  const JumpMap reset = [](double, const StateVec& x) {
    StateVec y = x;
    y(0) = 1.0;
    return y;
  };

  const ModeId ss{kTcpSlowStart}, ca{kTcpCongestionAvoidance}, off{kTcpTimeout};
  sys.events = {
      {ss, ca, StochasticEvent{drop}, halve},
      {ss, off, StochasticEvent{timeout}, reset},
      {ca, ca, StochasticEvent{drop}, halve},
      {ca, off, StochasticEvent{timeout}, reset},
      {off, ss, StochasticEvent{recover}, reset},
  };
  sys.initial_mode = ss;
  return sys;
}

StateVec tcp_initial_state() {
  StateVec x(2);
  x << 1.0, 0.0;
  return x;
}

Eigen::Vector2d sls_mode_field(int mode, const Eigen::Vector2d& p) {
  switch (mode) {
    case 0: return {-p.y(), p.x() + 2.0};
    case 1: return {-1.0, -1.0};
    case 2: return {1.0, -1.0};
    default: throw Error(ErrorCode::InvalidArgument, "SLS has three modes");
  }
}

ModeId sls_region(const Eigen::Vector2d& p) {
  if (p.x() >= 2.0) return ModeId{0};
  return p.y() >= 0.0 ? ModeId{1} : ModeId{2};
}

Eigen::Vector2d sls_field(const Eigen::Vector2d& p) { return sls_mode_field(sls_region(p).index, p); }

HybridSystemDef make_sls() {
  HybridSystemDef sys;
  sys.name = "sls";
  sys.n_modes = 3;
  sys.state_dim = 2;
  sys.mode_names = {"x>=2", "x<2,y>=0", "x<2,y<0"};
  for (int m = 0; m < 3; ++m) {
    sys.flows.push_back([m](double, const StateVec& x) {
      return StateVec(sls_mode_field(m, Eigen::Vector2d(x(0), x(1))));
    });
  }
  const JumpMap identity = [](double, const StateVec& x) { return x; };
  // A condition turns non-negative when the state enters the target region.
  const ScalarField enter_right = [](double, const StateVec& x) { return x(0) - 2.0; };
  const ScalarField enter_upper_left = [](double, const StateVec& x) { return std::min(2.0 - x(0), x(1)); };
  const ScalarField enter_lower_left = [](double, const StateVec& x) {
    return std::min(2.0 - x(0), -x(1));
  };
  const ScalarField cross_down = [](double, const StateVec& x) { return -x(1); };
  const ScalarField cross_up = [](double, const StateVec& x) { return x(1); };
  sys.events = {
      {ModeId{0}, ModeId{1}, DeterministicEvent{enter_upper_left}, identity},
      {ModeId{0}, ModeId{2}, DeterministicEvent{enter_lower_left}, identity},
      {ModeId{1}, ModeId{0}, DeterministicEvent{enter_right}, identity},
      {ModeId{1}, ModeId{2}, DeterministicEvent{cross_down}, identity},
      {ModeId{2}, ModeId{0}, DeterministicEvent{enter_right}, identity},
      {ModeId{2}, ModeId{1}, DeterministicEvent{cross_up}, identity},
  };
  sys.initial_mode = ModeId{0};
  return sys;
}

void ToyParams::validate() const {
  if (!(tau > 0.0 && tau < 1.0)) throw Error(ErrorCode::InvalidArgument, "tau must lie in (0, 1)");
}

HybridSystemDef make_toy(const ToyParams& p) {
  p.validate();
  HybridSystemDef sys;
  sys.name = "toy";
  sys.n_modes = 2;
  sys.state_dim = 1;
  sys.mode_names = {"a", "b"};
  sys.flows = {
      [a = p.a](double, const StateVec& x) { return StateVec(a * x); },
      [b = p.b](double, const StateVec& x) { return StateVec(b * x); },
  };
  sys.events = {
      {ModeId{0}, ModeId{1}, DeterministicEvent{[tau = p.tau](double t, const StateVec&) { return t - tau; }},
       [c = p.c](double, const StateVec& x) { return StateVec(c * x); }},
  };
  sys.initial_mode = ModeId{0};
  return sys;
}

double toy_solution(const ToyParams& p, double x0, double t) {
  if (t < p.tau) return std::exp(p.a * t) * x0;
  return p.c * std::exp(p.a * p.tau + p.b * (t - p.tau)) * x0;
}

ToyGradients toy_gradients(const ToyParams& p, double x0, double t) {
  if (t == p.tau) throw Error(ErrorCode::AtEventTime, "gradients are undefined at t == tau");
  ToyGradients g;
  if (t < p.tau) {
    g.da = t * std::exp(p.a * t) * x0;
    return g;
  }
  const double e = std::exp(p.a * p.tau + p.b * (t - p.tau)) * x0;
  g.da = p.tau * p.c * e;
  g.db = (t - p.tau) * p.c * e;
  g.dc = e;
  g.dtau = (p.a - p.b) * p.c * e;
  return g;
}

const char* to_string(PathologyFlag flag) noexcept {
  switch (flag) {
    case PathologyFlag::None: return "ok";
    case PathologyFlag::WronglyZero: return "gradient w.r.t b wrongly zero";
    case PathologyFlag::WronglyNonzero: return "gradient w.r.t b wrongly nonzero";
  }
  return "unknown";
}

PathologyReport pathology_report(const ToyParams& params, double tau_estimate, const std::vector<double>& sample_times,
                                 double x0) {
  params.validate();
  ToyParams estimated = params;
  estimated.tau = tau_estimate;
  PathologyReport report;
  report.tau = params.tau;
  report.tau_estimate = tau_estimate;
  for (double t : sample_times) {
    if (!(t > 0.0 && t < 1.0) || t == params.tau || t == tau_estimate) {
      throw Error(ErrorCode::InvalidArgument, "sample times must lie in (0, 1) away from both event times");
    }
    PathologySample s;
    s.t = t;
    s.true_mode = t < params.tau ? 0 : 1;
    s.estimated_mode = t < tau_estimate ? 0 : 1;
    s.grad_b_true = toy_gradients(params, x0, t).db;
    s.grad_b_estimated = toy_gradients(estimated, x0, t).db;
    if (s.true_mode == 1 && s.estimated_mode == 0) {
      s.flag = PathologyFlag::WronglyZero;
      ++report.wrongly_zero;
    } else if (s.true_mode == 0 && s.estimated_mode == 1) {
      s.flag = PathologyFlag::WronglyNonzero;
      ++report.wrongly_nonzero;
    }
    report.samples.push_back(s);
  }
  return report;
}

Flow make_diff_drive(DiffDriveControl control) {
  return [control = std::move(control)](double t, const StateVec& x) {
    const Eigen::Vector2d u = control(t, x);
    StateVec dx(3);
    dx << u(0) * std::cos(x(2)), u(0) * std::sin(x(2)), u(1);
    return dx;
  };
}

HybridSystemDef make_diff_drive_system(double u_v, double u_r) {
  HybridSystemDef sys;
  sys.name = "diff-drive";
  sys.n_modes = 1;
  sys.state_dim = 3;
  sys.mode_names = {"drive"};
  sys.flows = {make_diff_drive([u_v, u_r](double, const StateVec&) { return Eigen::Vector2d(u_v, u_r); })};
  sys.initial_mode = ModeId{0};
  return sys;
}

std::vector<std::string> system_names() { return {"tcp-reno", "sls", "toy", "diff-drive"}; }

HybridSystemDef system_by_name(const std::string& name) {
  if (name == "tcp-reno") return make_tcp_reno();
  if (name == "sls") return make_sls();
  if (name == "toy") return make_toy();
  if (name == "diff-drive") return make_diff_drive_system(1.0, 1.0);
  throw Error(ErrorCode::InvalidArgument, "unknown system '" + name + "'");
}

}  // namespace hal::systems
