#pragma once

#include <Eigen/Core>

#include <compare>
#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace hal {

using StateVec = Eigen::VectorXd;

/// Discrete mode identifier in [0, m).
struct ModeId {
  int index = 0;

  constexpr ModeId() = default;
  constexpr explicit ModeId(int i) : index(i) {}

  friend constexpr auto operator<=>(ModeId, ModeId) = default;
};

/// Time-stamped state sequence. A jump instant appears as two consecutive
/// samples with the same timestamp: pre-jump state, then post-jump state.
struct Trajectory {
  std::string id;
  std::vector<double> times;
  std::vector<StateVec> states;
  std::optional<std::vector<ModeId>> modes;
  std::optional<std::vector<double>> event_times;

  [[nodiscard]] std::size_t size() const noexcept { return times.size(); }
  [[nodiscard]] Eigen::Index state_dim() const noexcept {
    return states.empty() ? 0 : states.front().size();
  }
};

/// Contiguous slice [start_idx, end_idx) of a parent trajectory.
struct Subtrajectory {
  std::string parent_id;
  std::size_t start_idx = 0;
  std::size_t end_idx = 0;
  std::vector<double> times;
  std::vector<StateVec> states;
  std::optional<ModeId> recovered_mode;

  [[nodiscard]] std::size_t size() const noexcept { return times.size(); }
  [[nodiscard]] double duration() const noexcept {
    return times.empty() ? 0.0 : times.back() - times.front();
  }
};

using Flow = std::function<StateVec(double t, const StateVec& x)>;
using ScalarField = std::function<double(double t, const StateVec& x)>;
using JumpMap = std::function<StateVec(double t, const StateVec& x)>;

/// Fires when the condition moves from negative to non-negative.
struct DeterministicEvent {
  ScalarField condition;
};

/// Fires when the integrated intensity reaches an Exponential(1) budget.
struct StochasticEvent {
  ScalarField intensity;
};

struct EventSpec {
  ModeId source;
  ModeId target;
  std::variant<DeterministicEvent, StochasticEvent> kind;
  JumpMap jump;

  [[nodiscard]] bool is_stochastic() const noexcept {
    return std::holds_alternative<StochasticEvent>(kind);
  }
};

struct HybridSystemDef {
  std::string name;
  int n_modes = 0;
  int state_dim = 0;
  std::vector<Flow> flows;
  std::vector<EventSpec> events;
  ModeId initial_mode{0};
  std::vector<std::string> mode_names;

  /// Throws InvalidArgument if flows or event endpoints are inconsistent with n_modes.
  void validate() const;
};

/// Slices `traj` into a Subtrajectory; `end` is exclusive.
[[nodiscard]] Subtrajectory make_subtrajectory(const Trajectory& traj, std::size_t begin, std::size_t end);

/// Majority ground-truth mode over a slice (ties resolve to the smaller id).
[[nodiscard]] ModeId majority_mode(const std::vector<ModeId>& modes, std::size_t begin, std::size_t end);

}  // namespace hal
