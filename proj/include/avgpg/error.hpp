#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace avgpg {

enum class ErrorKind {
  NonStochasticRow,
  RewardOutOfRange,
  NotErgodic,
  MixingCapExceeded,
  SingularStationarySolve,
  TrajectoryTooShort,
  ProbabilityUnderflow,
  NonFiniteEvaluation,
  NoImprovementCycle,
  EpochTooShort,
  ConfigInvalid,
  InvalidArgument,
};

std::string_view to_string(ErrorKind kind);

/// Every recoverable failure in the library is reported through this type.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NonStochasticRow: return "NonStochasticRow";
    case ErrorKind::RewardOutOfRange: return "RewardOutOfRange";
    case ErrorKind::NotErgodic: return "NotErgodic";
    case ErrorKind::MixingCapExceeded: return "MixingCapExceeded";
    case ErrorKind::SingularStationarySolve: return "SingularStationarySolve";
    case ErrorKind::TrajectoryTooShort: return "TrajectoryTooShort";
    case ErrorKind::ProbabilityUnderflow: return "ProbabilityUnderflow";
    case ErrorKind::NonFiniteEvaluation: return "NonFiniteEvaluation";
    case ErrorKind::NoImprovementCycle: return "NoImprovementCycle";
    case ErrorKind::EpochTooShort: return "EpochTooShort";
    case ErrorKind::ConfigInvalid: return "ConfigInvalid";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

}  // namespace avgpg
