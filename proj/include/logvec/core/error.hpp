#pragma once

#include <stdexcept>
#include <string>

namespace logvec {

enum class ErrorCode {
  kInvalidArgument,
  kNotFound,
  kAlreadyExists,
  kCorrupt,
  kIo,
  kDimensionMismatch,
  kZeroVector,
  kUnavailable,
  kTimeout,
  kHistoryExpired,
  kConfig,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace logvec
