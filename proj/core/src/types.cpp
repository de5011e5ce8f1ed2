#include "hal/error.hpp"
#include "hal/types.hpp"

#include <algorithm>
#include <map>

namespace hal {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::EmptyTrajectory: return "EmptyTrajectory";
    case ErrorCode::NonMonotoneTime: return "NonMonotoneTime";
    case ErrorCode::NonFiniteFlow: return "NonFiniteFlow";
    case ErrorCode::StepUnderflow: return "StepUnderflow";
    case ErrorCode::NoSignChange: return "NoSignChange";
    case ErrorCode::ZenoGuard: return "ZenoGuard";
    case ErrorCode::AtEventTime: return "AtEventTime";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::InvalidDistribution: return "InvalidDistribution";
    case ErrorCode::NonPositiveSigma: return "NonPositiveSigma";
    case ErrorCode::DivergedLoss: return "DivergedLoss";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::NonPositiveTime: return "NonPositiveTime";
    case ErrorCode::NoSupervision: return "NoSupervision";
    case ErrorCode::NoOutgoingEdges: return "NoOutgoingEdges";
    case ErrorCode::Schema: return "Schema";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

void HybridSystemDef::validate() const {
  if (n_modes < 1) throw Error(ErrorCode::InvalidArgument, "system needs at least one mode");
  if (state_dim < 1) throw Error(ErrorCode::InvalidArgument, "state_dim must be positive");
  if (static_cast<int>(flows.size()) != n_modes) {
    throw Error(ErrorCode::InvalidArgument, "expected one flow per mode");
  }
  for (const auto& f : flows) {
    if (!f) throw Error(ErrorCode::InvalidArgument, "empty flow function");
  }
  if (initial_mode.index < 0 || initial_mode.index >= n_modes) {
    throw Error(ErrorCode::InvalidArgument, "initial mode out of range");
  }
  for (const auto& ev : events) {
    if (ev.source.index < 0 || ev.source.index >= n_modes || ev.target.index < 0 || ev.target.index >= n_modes) {
      throw Error(ErrorCode::InvalidArgument, "event endpoint out of range");
    }
    if (!ev.jump) throw Error(ErrorCode::InvalidArgument, "event without jump map");
  }
}

Subtrajectory make_subtrajectory(const Trajectory& traj, std::size_t begin, std::size_t end) {
  if (begin >= end || end > traj.size()) {
    throw Error(ErrorCode::InvalidArgument, "invalid subtrajectory range");
  }
  Subtrajectory s;
  s.parent_id = traj.id;
  s.start_idx = begin;
  s.end_idx = end;
  s.times.assign(traj.times.begin() + static_cast<std::ptrdiff_t>(begin),
                 traj.times.begin() + static_cast<std::ptrdiff_t>(end));
  s.states.assign(traj.states.begin() + static_cast<std::ptrdiff_t>(begin),
                  traj.states.begin() + static_cast<std::ptrdiff_t>(end));
  return s;
}

ModeId majority_mode(const std::vector<ModeId>& modes, std::size_t begin, std::size_t end) {
  std::map<int, int> counts;
  for (std::size_t i = begin; i < end && i < modes.size(); ++i) ++counts[modes[i].index];
  int best = 0;
  int best_count = -1;
  for (const auto& [mode, count] : counts) {
    if (count > best_count) {
      best = mode;
      best_count = count;
    }
  }
  return ModeId{best};
}

}  // namespace hal
