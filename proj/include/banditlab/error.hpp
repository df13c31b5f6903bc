#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace banditlab {

enum class ErrorCode {
  MissingColumn,
  UnknownCategory,
  NonNumeric,
  OutOfBounds,
  EmptyFile,
  InvalidSchema,
  InvalidArgument,
  DegenerateColumn,
  TooFewRows,
  InvalidCondition,
  SchemaMismatch,
  ArmUnderrepresented,
  UnknownArm,
  NonFinite,
  DimensionMismatch,
  ArmSetMismatch,
  UnknownAlgorithm,
  UnknownParameter,
  IoError,
  FormatError,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::UnknownCategory: return "UnknownCategory";
    case ErrorCode::NonNumeric: return "NonNumeric";
    case ErrorCode::OutOfBounds: return "OutOfBounds";
    case ErrorCode::EmptyFile: return "EmptyFile";
    case ErrorCode::InvalidSchema: return "InvalidSchema";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::DegenerateColumn: return "DegenerateColumn";
    case ErrorCode::TooFewRows: return "TooFewRows";
    case ErrorCode::InvalidCondition: return "InvalidCondition";
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
    case ErrorCode::ArmUnderrepresented: return "ArmUnderrepresented";
    case ErrorCode::UnknownArm: return "UnknownArm";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::ArmSetMismatch: return "ArmSetMismatch";
    case ErrorCode::UnknownAlgorithm: return "UnknownAlgorithm";
    case ErrorCode::UnknownParameter: return "UnknownParameter";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::FormatError: return "FormatError";
  }
  return "Unknown";
}

/// Library-wide exception. The code identifies the failure class; the message
/// carries row/column context where there is one.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Numerical failures (non-finite loss, failed factorization) are separated so
/// front ends can map them to a distinct exit status.
class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& message) : Error(ErrorCode::NonFinite, message) {}
};

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) throw Error(code, message);
}

}  // namespace banditlab
