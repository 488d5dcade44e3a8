#ifndef CURVE_EQUIV_ERRORS_HPP
#define CURVE_EQUIV_ERRORS_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace curve_equiv {

enum class ErrorKind {
  DimensionMismatch,
  DomainError,
  NotFound,
  DuplicateId,
  ParseError,
  EmptyGroup,
  InvalidArgument,
  NonConvergence,
  SingularInformation,
  DegenerateAllocation,
  ConstraintInfeasible,
  EmptyStats,
  NonUniqueExtremum,
  DroppedReplicates,
  IOError,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::DomainError: return "DomainError";
    case ErrorKind::NotFound: return "NotFound";
    case ErrorKind::DuplicateId: return "DuplicateId";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::EmptyGroup: return "EmptyGroup";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::NonConvergence: return "NonConvergence";
    case ErrorKind::SingularInformation: return "SingularInformation";
    case ErrorKind::DegenerateAllocation: return "DegenerateAllocation";
    case ErrorKind::ConstraintInfeasible: return "ConstraintInfeasible";
    case ErrorKind::EmptyStats: return "EmptyStats";
    case ErrorKind::NonUniqueExtremum: return "NonUniqueExtremum";
    case ErrorKind::DroppedReplicates: return "DroppedReplicates";
    case ErrorKind::IOError: return "IOError";
  }
  return "Unknown";
}

/// Single exception type for the library; `kind()` tells callers what failed.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

  /// True for failures of the numerics (as opposed to bad input).
  bool is_numerical() const noexcept {
    switch (kind_) {
      case ErrorKind::NonConvergence:
      case ErrorKind::SingularInformation:
      case ErrorKind::ConstraintInfeasible:
      case ErrorKind::NonUniqueExtremum:
      case ErrorKind::DroppedReplicates:
      case ErrorKind::DegenerateAllocation:
      case ErrorKind::EmptyStats:
        return true;
      default:
        return false;
    }
  }

 private:
  ErrorKind kind_;
};

}  // namespace curve_equiv

#endif  // CURVE_EQUIV_ERRORS_HPP
