#pragma once

#include <stdexcept>
#include <string>

namespace rdrom {

/// Error categories. The numeric values are shared with the C API status
/// codes and the CLI exit codes, so they must stay stable.
enum class ErrorCode : int {
  InvalidArgument = 2,
  Io = 3,
  Parse = 4,
  Numerical = 5,
  UndefinedMetric = 6,
  Config = 7,
  StageFailure = 8,
};

const char* error_code_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, const std::string& message) {
  if (!condition) fail(ErrorCode::InvalidArgument, message);
}

}  // namespace rdrom
