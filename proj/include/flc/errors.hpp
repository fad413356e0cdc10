#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace flc {

enum class ErrorKind {
  DimensionMismatch,
  SingularInterior,
  EmptyGeneratorSet,
  NoConvergence,
  InvalidScenario,
  FaultOnGeneratorInternalNode,
  NonFiniteState,
  ModelArityMismatch,
  NonIntegralAssignment,
  EmptyBatch,
  DivergedLoss,
  ArchitectureMismatch,
  EmptyClientSet,
  LengthMismatch,
  EmptyTrajectory,
  EmptyGroup,
  ProtocolError,
  ConfigError,
  IoError,
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the library carries a machine-readable kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void raise(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace flc
