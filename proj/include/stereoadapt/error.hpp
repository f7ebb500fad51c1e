#pragma once

#include <stdexcept>
#include <string>

namespace stereoadapt {

enum class ErrorCode {
  kShapeMismatch,
  kInvalidArgument,
  kUnknownParameter,
  kIndivisibleExtent,
  kMalformedFile,
  kIoFailure,
  kExtentMismatch,
  kDegenerateInput,
  kNonFinite,
};

const char* to_string(ErrorCode code);

/// Exception carrying a machine-checkable code next to the message.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kShapeMismatch: return "shape mismatch";
    case ErrorCode::kInvalidArgument: return "invalid argument";
    case ErrorCode::kUnknownParameter: return "unknown parameter";
    case ErrorCode::kIndivisibleExtent: return "indivisible extent";
    case ErrorCode::kMalformedFile: return "malformed file";
    case ErrorCode::kIoFailure: return "i/o failure";
    case ErrorCode::kNonFinite: return "non-finite value";
    case ErrorCode::kExtentMismatch: return "extent mismatch";
    case ErrorCode::kDegenerateInput: return "degenerate input";
  }
  return "error";
}

}  // namespace stereoadapt
