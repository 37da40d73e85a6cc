#include "rulattack/error.hpp"

namespace rulattack {

std::string_view error_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kMalformedLine: return "MalformedLine";
    case ErrorKind::kNonContiguousCycles: return "NonContiguousCycles";
    case ErrorKind::kDataNotFound: return "DataNotFound";
    case ErrorKind::kConfigError: return "ConfigError";
    case ErrorKind::kCorruptCheckpoint: return "CorruptCheckpoint";
    case ErrorKind::kVersionMismatch: return "VersionMismatch";
    case ErrorKind::kCorruptDataset: return "CorruptDataset";
    case ErrorKind::kAllChannelsConstant: return "AllChannelsConstant";
    case ErrorKind::kDegenerateChannel: return "DegenerateChannel";
    case ErrorKind::kTooShort: return "TooShort";
    case ErrorKind::kEpsilonOutOfRange: return "EpsilonOutOfRange";
    case ErrorKind::kEmptyInput: return "EmptyInput";
    case ErrorKind::kInvalidSpec: return "InvalidSpec";
    case ErrorKind::kShapeMismatch: return "ShapeMismatch";
    case ErrorKind::kNodeNotOnTape: return "NodeNotOnTape";
    case ErrorKind::kNonFinite: return "NonFinite";
    case ErrorKind::kDiverged: return "Diverged";
  }
  return "Unknown";
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kMalformedLine:
    case ErrorKind::kNonContiguousCycles:
    case ErrorKind::kDataNotFound:
    case ErrorKind::kConfigError:
    case ErrorKind::kCorruptCheckpoint:
    case ErrorKind::kVersionMismatch:
    case ErrorKind::kCorruptDataset:
      return 2;
    case ErrorKind::kAllChannelsConstant:
    case ErrorKind::kDegenerateChannel:
    case ErrorKind::kTooShort:
    case ErrorKind::kEpsilonOutOfRange:
    case ErrorKind::kEmptyInput:
    case ErrorKind::kInvalidSpec:
    case ErrorKind::kShapeMismatch:
      return 3;
    case ErrorKind::kNodeNotOnTape:
    case ErrorKind::kNonFinite:
    case ErrorKind::kDiverged:
      return 4;
  }
  return 4;
}

}  // namespace rulattack
