#include "adlift/error.hpp"

namespace adlift {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kUsage: return "Usage";
    case ErrorCode::kBadSpec: return "BadSpec";
    case ErrorCode::kBadAlpha: return "BadAlpha";
    case ErrorCode::kDomainError: return "DomainError";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kMissingColumn: return "MissingColumn";
    case ErrorCode::kBadLabel: return "BadLabel";
    case ErrorCode::kRaggedRow: return "RaggedRow";
    case ErrorCode::kUnalignedWindow: return "UnalignedWindow";
    case ErrorCode::kEmptyTable: return "EmptyTable";
    case ErrorCode::kZeroCellAtSmallAlpha: return "ZeroCellAtSmallAlpha";
    case ErrorCode::kFingerprintMismatch: return "FingerprintMismatch";
    case ErrorCode::kVersionMismatch: return "VersionMismatch";
    case ErrorCode::kCorruptFile: return "CorruptFile";
    case ErrorCode::kDegenerateData: return "DegenerateData";
    case ErrorCode::kInconsistentInputs: return "InconsistentInputs";
    case ErrorCode::kTooShort: return "TooShort";
    case ErrorCode::kZeroTotal: return "ZeroTotal";
    case ErrorCode::kOutOfDomain: return "OutOfDomain";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kNoConvergence: return "NoConvergence";
  }
  return "Unknown";
}

ErrorClass error_class(ErrorCode code) {
  switch (code) {
    case ErrorCode::kUsage:
    case ErrorCode::kBadSpec:
    case ErrorCode::kBadAlpha:
    case ErrorCode::kDomainError:
    case ErrorCode::kDimensionMismatch:
      return ErrorClass::kUsage;
    case ErrorCode::kNoConvergence:
      return ErrorClass::kNumerical;
    default:
      return ErrorClass::kData;
  }
}

}  // namespace adlift
