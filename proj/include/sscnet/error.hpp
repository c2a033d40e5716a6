#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sscnet {

enum class ErrorCode {
  InvalidPair,
  UnknownVoxel,
  CountOverflow,
  InvalidArgument,
  FormatError,
  DegenerateBaseline,
  MaskTooSmall,
  InsufficientLags,
  FitDiverged,
  CovarianceTooLarge,
  DeltaUndefined,
  TooFewSubjects,
  NotEnoughReplicates,
  SubjectMismatch,
  IcaNotConverged,
  UnstableExtraction,
  ConfigError,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Numerical failures are distinguished from input problems so the CLI can
/// map them onto separate exit codes.
bool is_numerical(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }
  /// what() without the code prefix.
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorCode code_;
  std::string message_;
};

}  // namespace sscnet
