#include "viewbench/error.hpp"

namespace viewbench {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidAngle: return "InvalidAngle";
    case ErrorCode::kInvalidBinning: return "InvalidBinning";
    case ErrorCode::kBinningMismatch: return "BinningMismatch";
    case ErrorCode::kAmbiguousDecode: return "AmbiguousDecode";
    case ErrorCode::kInvalidParameter: return "InvalidParameter";
    case ErrorCode::kBackgroundInRegression: return "BackgroundInRegression";
    case ErrorCode::kBackgroundInPoseLoss: return "BackgroundInPoseLoss";
    case ErrorCode::kLayoutError: return "LayoutError";
    case ErrorCode::kClassOutOfRange: return "ClassOutOfRange";
    case ErrorCode::kInvalidConfig: return "InvalidConfig";
    case ErrorCode::kConfigError: return "ConfigError";
    case ErrorCode::kDivergence: return "DivergenceError";
    case ErrorCode::kEmptyClass: return "EmptyClassError";
    case ErrorCode::kGeneration: return "GenerationError";
    case ErrorCode::kParse: return "ParseError";
    case ErrorCode::kIo: return "IoError";
  }
  return "Unknown";
}

}  // namespace viewbench
