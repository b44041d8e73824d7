#include "rwseg/error.hpp"

namespace rwseg {

std::string_view error_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ZeroNormRow: return "ZeroNormRow";
    case ErrorCode::GridMismatch: return "GridMismatch";
    case ErrorCode::DegenerateRow: return "DegenerateRow";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::MixedRepresentation: return "MixedRepresentation";
    case ErrorCode::NotAProbability: return "NotAProbability";
    case ErrorCode::SingularSystem: return "SingularSystem";
    case ErrorCode::NonFiniteIterate: return "NonFiniteIterate";
    case ErrorCode::UnsupportedMode: return "UnsupportedMode";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::VersionUnsupported: return "VersionUnsupported";
    case ErrorCode::CorruptPayload: return "CorruptPayload";
    case ErrorCode::InconsistentHeader: return "InconsistentHeader";
    case ErrorCode::IoFailure: return "IoFailure";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(error_name(code)) + ": " + message), code_(code) {}

void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

}  // namespace rwseg
