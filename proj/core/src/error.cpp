#include "tactile/error.hpp"

namespace tactile {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid argument";
    case ErrorCode::kShapeMismatch: return "shape mismatch";
    case ErrorCode::kMissingFile: return "missing file";
    case ErrorCode::kUnknownLabel: return "unknown label";
    case ErrorCode::kEmptyManifest: return "empty manifest";
    case ErrorCode::kMalformedManifest: return "malformed manifest";
    case ErrorCode::kNotDivisible: return "not divisible";
    case ErrorCode::kMissingIndex: return "missing index";
    case ErrorCode::kDuplicateIndex: return "duplicate index";
    case ErrorCode::kNothingMasked: return "nothing masked";
    case ErrorCode::kInfeasiblePairs: return "infeasible pairs";
    case ErrorCode::kEmptyBatch: return "empty batch";
    case ErrorCode::kInvalidLabel: return "invalid label";
    case ErrorCode::kNonFinite: return "non-finite value";
    case ErrorCode::kBackwardBeforeForward: return "backward before forward";
    case ErrorCode::kInvalidConfig: return "invalid config";
    case ErrorCode::kCorruptCheckpoint: return "corrupt checkpoint";
    case ErrorCode::kArchitectureMismatch: return "architecture mismatch";
    case ErrorCode::kEmptySplit: return "empty split";
    case ErrorCode::kIo: return "i/o error";
  }
  return "unknown error";
}

}  // namespace tactile
