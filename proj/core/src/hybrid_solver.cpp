#include "hal/hybrid_solver.hpp"

#include "hal/error.hpp"
#include "hal/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace hal {

namespace {

// Specs leaving the current mode, and the augmented-state slot of each
// stochastic one.
struct ActiveSet {
  std::vector<std::size_t> specs;
  std::vector<std::size_t> stochastic;  // subset of specs, in slot order
  std::vector<int> slot;                // per entry of specs: slot index or -1
};

ActiveSet active_set(const HybridSystemDef& sys, ModeId z) {
  ActiveSet a;
  for (std::size_t i = 0; i < sys.events.size(); ++i) {
    if (sys.events[i].source != z) continue;
    a.specs.push_back(i);
    if (sys.events[i].is_stochastic()) {
      a.slot.push_back(static_cast<int>(a.stochastic.size()));
      a.stochastic.push_back(i);
    } else {
      a.slot.push_back(-1);
    }
  }
  return a;
}

class ModeIntegrand {
 public:
  ModeIntegrand(const HybridSystemDef& sys, ModeId z, const ActiveSet& active)
      : sys_(sys), z_(z), active_(active), n_(sys.state_dim) {}

  StateVec operator()(double t, const StateVec& y) const {
    const StateVec x = y.head(n_);
    StateVec dy(y.size());
    dy.head(n_) = sys_.flows[static_cast<std::size_t>(z_.index)](t, x);
    for (std::size_t k = 0; k < active_.stochastic.size(); ++k) {
      const auto& ev = std::get<StochasticEvent>(sys_.events[active_.stochastic[k]].kind);
      const double rate = ev.intensity(t, x);
      if (rate < 0.0) throw Error(ErrorCode::InvalidArgument, "negative event intensity");
      dy(n_ + static_cast<Eigen::Index>(k)) = rate;
    }
    return dy;
  }

 private:
  const HybridSystemDef& sys_;
  ModeId z_;
  const ActiveSet& active_;
  Eigen::Index n_;
};

}  // namespace

HybridSolution odeint_hybrid(const HybridSystemDef& system, const StateVec& x0, ModeId z0, double t0, double t1,
                             const SolverConfig& config, std::uint64_t rng_seed) {
  system.validate();
  config.validate();
  if (x0.size() != system.state_dim) throw Error(ErrorCode::ShapeMismatch, "x0 has the wrong dimension");
  if (z0.index < 0 || z0.index >= system.n_modes) throw Error(ErrorCode::InvalidArgument, "z0 out of range");
  if (!std::isfinite(t0) || !std::isfinite(t1) || t1 < t0) {
    throw Error(ErrorCode::InvalidArgument, "t_span must be finite and increasing");
  }

  const Eigen::Index n = system.state_dim;
  Rng rng = make_rng(rng_seed);
  std::vector<StochasticEventState> clocks(system.events.size());
  for (std::size_t i = 0; i < system.events.size(); ++i) {
    if (system.events[i].is_stochastic()) clocks[i].budget = standard_exponential(rng);
  }

  HybridSolution sol;
  auto& traj = sol.trajectory;
  traj.modes.emplace();
  traj.event_times.emplace();
  auto record = [&](double t, const StateVec& x, ModeId z) {
    traj.times.push_back(t);
    traj.states.push_back(x);
    traj.modes->push_back(z);
  };

  double t = t0;
  StateVec x = x0;
  ModeId z = z0;
  double mode_start = t0;
  record(t, x, z);

  const bool adaptive = config.method == Method::DormandPrince;
  const double fixed_dt = config.dt_init.value_or(0.01);
  const std::size_t max_events = static_cast<std::size_t>(
      std::ceil(config.max_events_per_unit_time * std::max(1.0, t1 - t0)));

  // Output grid bookkeeping.
  const bool gridded = config.output_dt.has_value();
  long long next_k = 1;
  auto grid_time = [&](long long k) {
    return std::min(t1, t0 + static_cast<double>(k) * config.output_dt.value_or(1.0));
  };

  std::size_t steps = 0;
  while (t < t1) {
    const ActiveSet active = active_set(system, z);
    const ModeIntegrand integrand(system, z, active);
    const Flow aug_flow = [&integrand](double tt, const StateVec& yy) { return integrand(tt, yy); };

    auto augment = [&](const StateVec& xs) {
      StateVec y(n + static_cast<Eigen::Index>(active.stochastic.size()));
      y.head(n) = xs;
      for (std::size_t k = 0; k < active.stochastic.size(); ++k) {
        y(n + static_cast<Eigen::Index>(k)) = clocks[active.stochastic[k]].accumulated;
      }
      return y;
    };
    // Event value of active entry j: >= 0 means the event state is true.
    auto event_value = [&](std::size_t j, double tt, const StateVec& y) {
      const std::size_t spec = active.specs[j];
      if (active.slot[j] >= 0) return y(n + active.slot[j]) - clocks[spec].budget;
      return std::get<DeterministicEvent>(system.events[spec].kind).condition(tt, y.head(n));
    };

    StateVec y = augment(x);
    StateVec k1 = aug_flow(t, y);
    sol.step_stats.fevals += 1;
    double dt = fixed_dt;
    if (adaptive) {
      dt = config.dt_init ? *config.dt_init : initial_step_size(aug_flow, t, y, k1, 4, config.atol, config.rtol);
      sol.step_stats.fevals += 1;
    }

    std::vector<bool> armed(active.specs.size());
    for (std::size_t j = 0; j < active.specs.size(); ++j) armed[j] = event_value(j, t, y) < 0.0;

    bool jumped = false;
    while (t < t1 && !jumped) {
      if (++steps > config.max_steps) throw Error(ErrorCode::StepUnderflow, "max_steps exceeded");
      double target = t1;
      if (gridded) {
        while (grid_time(next_k) <= t) ++next_k;
        target = grid_time(next_k);
      }
      const double tiny = 1e3 * std::numeric_limits<double>::epsilon() * std::max(std::abs(t), 1.0);
      // A step that would stop just short of the target lands on it instead.
      const bool lands = dt * (1.0 + 1e-6) >= target - t;
      const double h = lands ? target - t : dt;
      if (lands && h < tiny) {
        t = target;
        if (gridded) record(t, y.head(n), z);
        continue;
      }
      if (h < tiny) throw Error(ErrorCode::StepUnderflow, "step size underflow at t=" + std::to_string(t));

      StateVec y_next;
      double ratio = 0.0;
      StateVec k_last;
      if (adaptive) {
        auto step = step_dopri(aug_flow, t, y, h, &k1);
        sol.step_stats.fevals += 6;
        ratio = error_ratio(y, step.x_next, step.err, config.atol, config.rtol);
        if (ratio > 1.0) {
          ++sol.step_stats.rejected;
          dt = adapt_step(h, ratio, config.safety, config.min_factor, config.max_factor, 4);
          continue;
        }
        y_next = std::move(step.x_next);
        k_last = std::move(step.k_last);
      } else {
        y_next = step_rk4(aug_flow, t, y, h);
        sol.step_stats.fevals += 4;
      }
      const double t_next = lands ? target : t + h;

      auto fired_at = [&](double tt, const StateVec& yy) {
        for (std::size_t j = 0; j < active.specs.size(); ++j) {
          if (armed[j] && event_value(j, tt, yy) >= 0.0) return true;
        }
        return false;
      };

      if (fired_at(t_next, y_next)) {
        const ScalarField any_fired = [&](double tt, const StateVec& yy) { return fired_at(tt, yy) ? 1.0 : -1.0; };
        const auto loc = locate_event(aug_flow, any_fired, t, y, t_next, y_next, config);
        std::size_t winner = active.specs.size();
        for (std::size_t j = 0; j < active.specs.size(); ++j) {
          if (armed[j] && event_value(j, loc.t, loc.x) >= 0.0) {
            winner = j;
            break;
          }
        }
        const std::size_t spec_idx = active.specs[winner];
        const EventSpec& spec = system.events[spec_idx];

        for (std::size_t k = 0; k < active.stochastic.size(); ++k) {
          clocks[active.stochastic[k]].accumulated = loc.x(n + static_cast<Eigen::Index>(k));
        }
        t = loc.t;
        x = loc.x.head(n);
        record(t, x, z);
        StateVec x_plus = spec.jump(t, x);
        if (x_plus.size() != n || !x_plus.allFinite()) {
          throw Error(ErrorCode::NonFiniteFlow, "jump map produced an invalid state");
        }
        sol.mode_timeline.push_back({mode_start, t, z});
        sol.events.push_back({t, spec.source, spec.target, spec_idx});
        traj.event_times->push_back(t);
        x = std::move(x_plus);
        z = spec.target;
        mode_start = t;
        record(t, x, z);
        if (spec.is_stochastic()) {
          clocks[spec_idx].accumulated = 0.0;
          clocks[spec_idx].budget = standard_exponential(rng);
        }
        ++sol.step_stats.accepted;
        if (sol.events.size() > max_events) {
          throw Error(ErrorCode::ZenoGuard, "event count exceeded " + std::to_string(max_events));
        }
        jumped = true;
        continue;
      }

      ++sol.step_stats.accepted;
      t = t_next;
      y = std::move(y_next);
      if (adaptive) {
        k1 = std::move(k_last);
        dt = adapt_step(h, ratio, config.safety, config.min_factor, config.max_factor, 4);
      }
      if (!gridded || lands) record(t, y.head(n), z);
      for (std::size_t j = 0; j < active.specs.size(); ++j) armed[j] = event_value(j, t, y) < 0.0;
    }
    if (!jumped) {
      x = y.head(n);
      for (std::size_t k = 0; k < active.stochastic.size(); ++k) {
        clocks[active.stochastic[k]].accumulated = y(n + static_cast<Eigen::Index>(k));
      }
    }
  }
  sol.mode_timeline.push_back({mode_start, t1, z});
  return sol;
}

Trajectory to_trajectory(const HybridSolution& solution, const std::string& id) {
  Trajectory t = solution.trajectory;
  t.id = id;
  return t;
}

}  // namespace hal
