#include "logvec/core/error.hpp"

namespace logvec {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid argument";
    case ErrorCode::kNotFound: return "not found";
    case ErrorCode::kAlreadyExists: return "already exists";
    case ErrorCode::kCorrupt: return "corrupt data";
    case ErrorCode::kIo: return "i/o error";
    case ErrorCode::kDimensionMismatch: return "dimension mismatch";
    case ErrorCode::kZeroVector: return "zero vector";
    case ErrorCode::kUnavailable: return "unavailable";
    case ErrorCode::kTimeout: return "timeout";
    case ErrorCode::kHistoryExpired: return "history expired";
    case ErrorCode::kConfig: return "configuration error";
  }
  return "unknown";
}

}  // namespace logvec
