#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ptune {

enum class ErrorCode {
  MissingFile,
  SchemaMismatch,
  NonFiniteSample,
  EmptyInput,
  InsufficientSubjects,
  InsufficientStrides,
  KindMismatch,
  LengthMismatch,
  InsufficientSamples,
  PhaseOutOfRange,
  InfeasibleConstraints,
  NonConvergence,
  ZeroVarianceReference,
  RankDeficientTaskGrid,
  DegenerateCalibration,
  SeparationExceeded,
  OutOfBounds,
  MissingBaselineTask,
  RegenerationRejected,
  MissingModel,
  UnmatchedPairs,
  NotFound,
  ValidationFailed,
  DirtyBundle,
  DigestMismatch,
  VersionUnsupported,
  InvalidArgument,
  Busy,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace ptune
