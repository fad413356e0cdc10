#include "flc/errors.hpp"

namespace flc {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::SingularInterior: return "SingularInterior";
    case ErrorKind::EmptyGeneratorSet: return "EmptyGeneratorSet";
    case ErrorKind::NoConvergence: return "NoConvergence";
    case ErrorKind::InvalidScenario: return "InvalidScenario";
    case ErrorKind::FaultOnGeneratorInternalNode: return "FaultOnGeneratorInternalNode";
    case ErrorKind::NonFiniteState: return "NonFiniteState";
    case ErrorKind::ModelArityMismatch: return "ModelArityMismatch";
    case ErrorKind::NonIntegralAssignment: return "NonIntegralAssignment";
    case ErrorKind::EmptyBatch: return "EmptyBatch";
    case ErrorKind::DivergedLoss: return "DivergedLoss";
    case ErrorKind::ArchitectureMismatch: return "ArchitectureMismatch";
    case ErrorKind::EmptyClientSet: return "EmptyClientSet";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::EmptyTrajectory: return "EmptyTrajectory";
    case ErrorKind::EmptyGroup: return "EmptyGroup";
    case ErrorKind::ProtocolError: return "ProtocolError";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace flc
