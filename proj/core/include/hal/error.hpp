#pragma once

#include <stdexcept>
#include <string>

namespace hal {

enum class ErrorCode {
  EmptyTrajectory,
  NonMonotoneTime,
  NonFiniteFlow,
  StepUnderflow,
  NoSignChange,
  ZenoGuard,
  AtEventTime,
  ShapeMismatch,
  InvalidDistribution,
  NonPositiveSigma,
  DivergedLoss,
  LengthMismatch,
  InvalidArgument,
  NonPositiveTime,
  NoSupervision,
  NoOutgoingEdges,
  Schema,
  Io,
};

[[nodiscard]] const char* to_string(ErrorCode code) noexcept;

/// Single exception type for the library; `code()` identifies the failure.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  [[nodiscard]] ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace hal
