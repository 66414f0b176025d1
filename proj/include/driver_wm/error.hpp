#pragma once

#include <stdexcept>
#include <string>

namespace dwm {

enum class ErrorCode {
  kShapeMismatch,
  kEmptyKeySet,
  kEmptyInput,
  kNonFinite,
  kInvalidConfig,
  kUnknownView,
  kLabelOutOfRange,
  kBadMagic,
  kBadVersion,
  kTruncated,
  kHeaderMismatch,
  kIo,
  kUnsupported,
  kNotFound,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kShapeMismatch: return "shape mismatch";
    case ErrorCode::kEmptyKeySet: return "empty key set";
    case ErrorCode::kEmptyInput: return "empty input";
    case ErrorCode::kNonFinite: return "non-finite value";
    case ErrorCode::kInvalidConfig: return "invalid config";
    case ErrorCode::kUnknownView: return "unknown view";
    case ErrorCode::kLabelOutOfRange: return "label out of range";
    case ErrorCode::kBadMagic: return "bad magic";
    case ErrorCode::kBadVersion: return "bad version";
    case ErrorCode::kTruncated: return "truncated payload";
    case ErrorCode::kHeaderMismatch: return "header mismatch";
    case ErrorCode::kIo: return "i/o error";
    case ErrorCode::kUnsupported: return "unsupported";
    case ErrorCode::kNotFound: return "not found";
  }
  return "unknown";
}

/// Every failure the library reports is an Error carrying a code, so callers
/// (the CLI in particular) can map it to an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

  /// True for failures caused by input data or files rather than usage.
  bool is_data_error() const noexcept {
    switch (code_) {
      case ErrorCode::kBadMagic:
      case ErrorCode::kBadVersion:
      case ErrorCode::kTruncated:
      case ErrorCode::kHeaderMismatch:
      case ErrorCode::kIo:
      case ErrorCode::kShapeMismatch:
      case ErrorCode::kNotFound:
        return true;
      default:
        return false;
    }
  }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace dwm
