#pragma once

#include <stdexcept>
#include <string>

namespace advad {

enum class ErrorCode {
  kInvalidArgument,
  kInvalidRange,
  kWrongRangeTag,
  kShapeMismatch,
  kStepOutOfRange,
  kIo,
  kMalformedHeader,
  kUnsupportedFormat,
  kDegenerateClasses,
  kDivergence,
  kNoCamSupport,
  kNonFiniteState,
  kMissingTrace,
  kEmptyInput,
};

const char* to_string(ErrorCode code);

// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace advad
