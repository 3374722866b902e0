#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace collusion {

enum class ErrorCode {
  kInvalidPair,
  kIoError,
  kEmptyDataset,
  kConfigError,
  kDomainError,
  kEmptyData,
  kNonFiniteFeature,
  kWidthMismatch,
  kVersionMismatch,
  kCorruptModel,
  kEmptyAfterFilter,
  kUnknownPlayer,
  kInvalidArgument,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidPair: return "InvalidPair";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kEmptyDataset: return "EmptyDataset";
    case ErrorCode::kConfigError: return "ConfigError";
    case ErrorCode::kDomainError: return "DomainError";
    case ErrorCode::kEmptyData: return "EmptyData";
    case ErrorCode::kNonFiniteFeature: return "NonFiniteFeature";
    case ErrorCode::kWidthMismatch: return "WidthMismatch";
    case ErrorCode::kVersionMismatch: return "VersionMismatch";
    case ErrorCode::kCorruptModel: return "CorruptModel";
    case ErrorCode::kEmptyAfterFilter: return "EmptyAfterFilter";
    case ErrorCode::kUnknownPlayer: return "UnknownPlayer";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so the
/// CLI and the HTTP layer can map it without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace collusion
