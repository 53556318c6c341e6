#include "vartex/error.hpp"

namespace vartex {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConstantChannel: return "ConstantChannel";
    case ErrorCode::IndivisibleGrid: return "IndivisibleGrid";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::HeaderCorrupt: return "HeaderCorrupt";
    case ErrorCode::PayloadTruncated: return "PayloadTruncated";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFiniteInput: return "NonFiniteInput";
    case ErrorCode::HeadDivisibility: return "HeadDivisibility";
    case ErrorCode::RateOutOfRange: return "RateOutOfRange";
    case ErrorCode::VariableCountMismatch: return "VariableCountMismatch";
    case ErrorCode::EmptyLatitudes: return "EmptyLatitudes";
    case ErrorCode::EmptySeries: return "EmptySeries";
    case ErrorCode::ZeroAnomalyVariance: return "ZeroAnomalyVariance";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::ConfigMismatch: return "ConfigMismatch";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace vartex
