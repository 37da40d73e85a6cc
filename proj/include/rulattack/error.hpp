#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rulattack {

enum class ErrorKind {
  // input / data
  kMalformedLine,
  kNonContiguousCycles,
  kDataNotFound,
  kConfigError,
  kCorruptCheckpoint,
  kVersionMismatch,
  kCorruptDataset,
  // domain
  kAllChannelsConstant,
  kDegenerateChannel,
  kTooShort,
  kEpsilonOutOfRange,
  kEmptyInput,
  kInvalidSpec,
  kShapeMismatch,
  // internal
  kNodeNotOnTape,
  kNonFinite,
  kDiverged,
};

std::string_view error_name(ErrorKind kind);

/// Process exit code associated with an error class: 2 for input/data
/// problems, 3 for domain errors, 4 for internal failures.
int exit_code(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  std::string_view name() const { return error_name(kind_); }

 private:
  ErrorKind kind_;
};

}  // namespace rulattack
