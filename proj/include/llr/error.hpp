#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace llr {

enum class ErrorCode {
  NonFiniteInput,
  NotAMatrix,
  ZeroCutoff,
  BadK,
  TooFewEigenvalues,
  MissingGradient,
  EmptyInput,
  InfiniteAlpha,
  NonPositiveLog,
  MissingUpdateNorm,
  StepOutOfRange,
  UnknownLayer,
  NonMonotonicStep,
  InvalidConfig,
  TokenOutOfRange,
  ShapeMismatch,
  DivergedLoss,
  ParseError,
  ByteRangeError,
  IoError,
};

std::string_view error_code_name(ErrorCode code);

/// Exit status a command-line front end reports for an error class:
/// 2 usage/config, 3 data, 4 numerical.
int exit_status(ErrorCode code);

class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string &what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

private:
  ErrorCode code_;
};

} // namespace llr
