#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace penpath {

enum class ErrorCode {
  // input validation
  DimensionMismatch,
  NotPositiveDefinite,
  DependentConstraints,
  RankDeficientDesign,
  NonpositiveWeight,
  NonIncreasingAbscissae,
  MissingProvenance,
  InconsistentCoefficients,
  InvalidArgument,
  // numerical / path following
  PivotTooSmall,
  NoFurtherEvents,
  NoValidConfiguration,
  AmbiguousConfiguration,
  MaxSegmentsExceeded,
  Infeasible,
  NonConvergence,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::DependentConstraints: return "DependentConstraints";
    case ErrorCode::RankDeficientDesign: return "RankDeficientDesign";
    case ErrorCode::NonpositiveWeight: return "NonpositiveWeight";
    case ErrorCode::NonIncreasingAbscissae: return "NonIncreasingAbscissae";
    case ErrorCode::MissingProvenance: return "MissingProvenance";
    case ErrorCode::InconsistentCoefficients: return "InconsistentCoefficients";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::PivotTooSmall: return "PivotTooSmall";
    case ErrorCode::NoFurtherEvents: return "NoFurtherEvents";
    case ErrorCode::NoValidConfiguration: return "NoValidConfiguration";
    case ErrorCode::AmbiguousConfiguration: return "AmbiguousConfiguration";
    case ErrorCode::MaxSegmentsExceeded: return "MaxSegmentsExceeded";
    case ErrorCode::Infeasible: return "Infeasible";
    case ErrorCode::NonConvergence: return "NonConvergence";
  }
  return "Unknown";
}

/// True for failures of the numerical machinery as opposed to bad input.
/// NotPositiveDefinite counts as a solver failure: it is only detectable by
/// attempting the factorization.
constexpr bool is_solver_error(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::NotPositiveDefinite:
    case ErrorCode::PivotTooSmall:
    case ErrorCode::NoFurtherEvents:
    case ErrorCode::NoValidConfiguration:
    case ErrorCode::AmbiguousConfiguration:
    case ErrorCode::MaxSegmentsExceeded:
    case ErrorCode::Infeasible:
    case ErrorCode::NonConvergence:
      return true;
    default:
      return false;
  }
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace penpath
