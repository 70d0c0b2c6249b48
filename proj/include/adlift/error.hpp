#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace adlift {

enum class ErrorCode {
  // usage / configuration
  kUsage,
  kBadSpec,
  kBadAlpha,
  kDomainError,
  kDimensionMismatch,
  // data
  kMissingColumn,
  kBadLabel,
  kRaggedRow,
  kUnalignedWindow,
  kEmptyTable,
  kZeroCellAtSmallAlpha,
  kFingerprintMismatch,
  kVersionMismatch,
  kCorruptFile,
  kDegenerateData,
  kInconsistentInputs,
  kTooShort,
  kZeroTotal,
  kOutOfDomain,
  kIoError,
  // numerical
  kNoConvergence,
};

// Process exit-code family an error maps to.
enum class ErrorClass { kUsage = 1, kData = 2, kNumerical = 3 };

std::string_view error_code_name(ErrorCode code);
ErrorClass error_class(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace adlift
