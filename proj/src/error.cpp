#include "sscnet/error.hpp"

namespace sscnet {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidPair: return "InvalidPair";
    case ErrorCode::UnknownVoxel: return "UnknownVoxel";
    case ErrorCode::CountOverflow: return "CountOverflow";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::FormatError: return "FormatError";
    case ErrorCode::DegenerateBaseline: return "DegenerateBaseline";
    case ErrorCode::MaskTooSmall: return "MaskTooSmall";
    case ErrorCode::InsufficientLags: return "InsufficientLags";
    case ErrorCode::FitDiverged: return "FitDiverged";
    case ErrorCode::CovarianceTooLarge: return "CovarianceTooLarge";
    case ErrorCode::DeltaUndefined: return "DeltaUndefined";
    case ErrorCode::TooFewSubjects: return "TooFewSubjects";
    case ErrorCode::NotEnoughReplicates: return "NotEnoughReplicates";
    case ErrorCode::SubjectMismatch: return "SubjectMismatch";
    case ErrorCode::IcaNotConverged: return "IcaNotConverged";
    case ErrorCode::UnstableExtraction: return "UnstableExtraction";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

bool is_numerical(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::DegenerateBaseline:
    case ErrorCode::InsufficientLags:
    case ErrorCode::FitDiverged:
    case ErrorCode::CovarianceTooLarge:
    case ErrorCode::DeltaUndefined:
    case ErrorCode::NotEnoughReplicates:
    case ErrorCode::IcaNotConverged:
    case ErrorCode::UnstableExtraction:
      return true;
    default:
      return false;
  }
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), message_(message) {}

}  // namespace sscnet
