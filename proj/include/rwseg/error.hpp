#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rwseg {

enum class ErrorCode {
  InvalidArgument,
  ZeroNormRow,
  GridMismatch,
  DegenerateRow,
  DimensionMismatch,
  MixedRepresentation,
  NotAProbability,
  SingularSystem,
  NonFiniteIterate,
  UnsupportedMode,
  BadMagic,
  VersionUnsupported,
  CorruptPayload,
  InconsistentHeader,
  IoFailure,
};

std::string_view error_name(ErrorCode code) noexcept;

// All library failures are reported with this exception. `what()` is prefixed
// with the error name so CLI output and Python messages carry it verbatim.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }
  std::string_view name() const noexcept { return error_name(code_); }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

}  // namespace rwseg
