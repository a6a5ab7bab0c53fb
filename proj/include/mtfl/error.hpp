// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mtfl {

// Bad user input: shapes, configs, manifests. The CLI maps these to exit 1.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ShapeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class FormatErrorKind {
  kBadMagic,
  kBadVersion,
  kTruncated,
  kNonFinite,
  kChecksumMismatch,
  kTrailingData,
  kMalformed,
};

std::string_view to_string(FormatErrorKind kind);

// A binary file (feature file or checkpoint) that does not decode.
class FormatError : public std::runtime_error {
 public:
  FormatError(FormatErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  FormatErrorKind kind() const noexcept { return kind_; }

 private:
  FormatErrorKind kind_;
};

inline std::string_view to_string(FormatErrorKind kind) {
  switch (kind) {
    case FormatErrorKind::kBadMagic: return "bad magic";
    case FormatErrorKind::kBadVersion: return "unsupported version";
    case FormatErrorKind::kTruncated: return "truncated";
    case FormatErrorKind::kNonFinite: return "non-finite value";
    case FormatErrorKind::kChecksumMismatch: return "checksum mismatch";
    case FormatErrorKind::kTrailingData: return "trailing data";
    case FormatErrorKind::kMalformed: return "malformed";
  }
  return "unknown";
}

}  // namespace mtfl
