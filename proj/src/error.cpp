#include "llr/error.hpp"

namespace llr {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
  case ErrorCode::NonFiniteInput: return "NonFiniteInput";
  case ErrorCode::NotAMatrix: return "NotAMatrix";
  case ErrorCode::ZeroCutoff: return "ZeroCutoff";
  case ErrorCode::BadK: return "BadK";
  case ErrorCode::TooFewEigenvalues: return "TooFewEigenvalues";
  case ErrorCode::MissingGradient: return "MissingGradient";
  case ErrorCode::EmptyInput: return "EmptyInput";
  case ErrorCode::InfiniteAlpha: return "InfiniteAlpha";
  case ErrorCode::NonPositiveLog: return "NonPositiveLog";
  case ErrorCode::MissingUpdateNorm: return "MissingUpdateNorm";
  case ErrorCode::StepOutOfRange: return "StepOutOfRange";
  case ErrorCode::UnknownLayer: return "UnknownLayer";
  case ErrorCode::NonMonotonicStep: return "NonMonotonicStep";
  case ErrorCode::InvalidConfig: return "InvalidConfig";
  case ErrorCode::TokenOutOfRange: return "TokenOutOfRange";
  case ErrorCode::ShapeMismatch: return "ShapeMismatch";
  case ErrorCode::DivergedLoss: return "DivergedLoss";
  case ErrorCode::ParseError: return "ParseError";
  case ErrorCode::ByteRangeError: return "ByteRangeError";
  case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

int exit_status(ErrorCode code) {
  switch (code) {
  case ErrorCode::InvalidConfig:
  case ErrorCode::BadK:
  case ErrorCode::StepOutOfRange:
  case ErrorCode::UnknownLayer:
  case ErrorCode::NonMonotonicStep:
  case ErrorCode::MissingGradient:
  case ErrorCode::MissingUpdateNorm:
    return 2;
  case ErrorCode::ParseError:
  case ErrorCode::ByteRangeError:
  case ErrorCode::IoError:
  case ErrorCode::NotAMatrix:
  case ErrorCode::EmptyInput:
  case ErrorCode::TokenOutOfRange:
  case ErrorCode::ShapeMismatch:
    return 3;
  case ErrorCode::NonFiniteInput:
  case ErrorCode::ZeroCutoff:
  case ErrorCode::TooFewEigenvalues:
  case ErrorCode::InfiniteAlpha:
  case ErrorCode::NonPositiveLog:
  case ErrorCode::DivergedLoss:
    return 4;
  }
  return 4;
}

} // namespace llr
