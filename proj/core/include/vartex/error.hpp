#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace vartex {

enum class ErrorCode {
  ConstantChannel,
  IndivisibleGrid,
  BadMagic,
  VersionMismatch,
  HeaderCorrupt,
  PayloadTruncated,
  ShapeMismatch,
  NonFiniteInput,
  HeadDivisibility,
  RateOutOfRange,
  VariableCountMismatch,
  EmptyLatitudes,
  EmptySeries,
  ZeroAnomalyVariance,
  NonFiniteGradient,
  NonFiniteLoss,
  ConfigMismatch,
  InvalidConfig,
  InvalidArgument,
  Io,
};

std::string_view to_string(ErrorCode code);

/// Every failure in the library surfaces as this exception; `code()` tells
/// callers which contract was violated and `what()` names the offending field.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace vartex
