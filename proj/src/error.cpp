#include "advad/error.hpp"

namespace advad {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid-argument";
    case ErrorCode::kInvalidRange: return "invalid-range";
    case ErrorCode::kWrongRangeTag: return "wrong-range-tag";
    case ErrorCode::kShapeMismatch: return "shape-mismatch";
    case ErrorCode::kStepOutOfRange: return "step-out-of-range";
    case ErrorCode::kIo: return "io-error";
    case ErrorCode::kMalformedHeader: return "malformed-header";
    case ErrorCode::kUnsupportedFormat: return "unsupported-format";
    case ErrorCode::kDegenerateClasses: return "degenerate-classes";
    case ErrorCode::kDivergence: return "divergence";
    case ErrorCode::kNoCamSupport: return "no-cam-support";
    case ErrorCode::kNonFiniteState: return "non-finite-state";
    case ErrorCode::kMissingTrace: return "missing-trace";
    case ErrorCode::kEmptyInput: return "empty-input";
  }
  return "unknown";
}

}  // namespace advad
