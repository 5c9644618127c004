#include "rdrom/error.hpp"

namespace rdrom {

const char* error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "invalid_argument";
    case ErrorCode::Io: return "io";
    case ErrorCode::Parse: return "parse";
    case ErrorCode::Numerical: return "numerical";
    case ErrorCode::UndefinedMetric: return "undefined_metric";
    case ErrorCode::Config: return "config";
    case ErrorCode::StageFailure: return "stage_failure";
  }
  return "unknown";
}

}  // namespace rdrom
