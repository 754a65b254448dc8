#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace citeval {

enum class ErrorCode {
  kInvalidArgument = 1,
  kFileMissing,
  kMalformedDocument,
  kSchemaViolation,
  kEmptyCorpus,
  kAuthFailure,
  kRateLimited,
  kTimeout,
  kUnreachable,
  kExhaustedRetries,
  kMalformedResponse,
  kDimensionMismatch,
  kEmbedderFailure,
  kRerankerUnavailable,
  kUndefinedMetric,
  kInsufficientRecords,
  kConfigInvalid,
  kLocked,
  kTampered,
  kNoResults,
  kIo,
};

std::string_view error_code_name(ErrorCode code) noexcept;

// Every failure raised by the library carries a code so that the C API can
// map it onto a status value without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace citeval
