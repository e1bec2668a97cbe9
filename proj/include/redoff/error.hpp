#pragma once

#include <stdexcept>
#include <string>

namespace redoff {

enum class ErrorKind {
  kSchema,
  kIntegrity,
  kValue,
  kConfig,
  kEmptyInput,
  kDimension,
  kDegenerateLabels,
  kInsufficientHistory,
  kTrainingDivergence,
  kContractViolation,
  kIo,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kSchema: return "schema error";
    case ErrorKind::kIntegrity: return "integrity error";
    case ErrorKind::kValue: return "value error";
    case ErrorKind::kConfig: return "config error";
    case ErrorKind::kEmptyInput: return "empty-input error";
    case ErrorKind::kDimension: return "dimension error";
    case ErrorKind::kDegenerateLabels: return "degenerate-labels error";
    case ErrorKind::kInsufficientHistory: return "insufficient-history error";
    case ErrorKind::kTrainingDivergence: return "training-divergence error";
    case ErrorKind::kContractViolation: return "contract violation";
    case ErrorKind::kIo: return "i/o error";
  }
  return "error";
}

/// Single exception type for the library; `kind()` tells callers which
/// contract was broken so the CLI can map it onto an exit code.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

}  // namespace redoff
