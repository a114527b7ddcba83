#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace viewbench {

enum class ErrorCode {
  kInvalidAngle,
  kInvalidBinning,
  kBinningMismatch,
  kAmbiguousDecode,
  kInvalidParameter,
  kBackgroundInRegression,
  kBackgroundInPoseLoss,
  kLayoutError,
  kClassOutOfRange,
  kInvalidConfig,
  kConfigError,
  kDivergence,
  kEmptyClass,
  kGeneration,
  kParse,
  kIo,
};

std::string_view to_string(ErrorCode code);

/// Base exception for every failure raised by the library. The code lets
/// callers (the CLI in particular) map failures onto exit statuses.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

class DivergenceError : public Error {
 public:
  DivergenceError(long iteration, const std::string& what)
      : Error(ErrorCode::kDivergence, what), iteration_(iteration) {}

  long iteration() const noexcept { return iteration_; }

 private:
  long iteration_;
};

}  // namespace viewbench
