#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace railkit {

enum class ErrorCode {
  NonUnitRotation,
  NonUnitPose,
  DimensionMismatch,
  IndexOutOfRange,
  EmptyComposition,
  InvalidChain,
  UnsupportedPair,
  AttachmentMismatch,
  ParseError,
  UnknownKey,
  MissingField,
  NotPositiveDefinite,
  NonUnitTarget,
  ApertureOutOfRange,
  BadMagic,
  BadVersion,
  BadLength,
  NoAnchor,
  UnknownBranch,
  DeltaOutOfBounds,
  SchemaMismatch,
  CorruptRow,
  MalformedMessage,
  UnknownType,
  BranchBusy,
  NotController,
  Io,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonUnitRotation: return "NonUnitRotation";
    case ErrorCode::NonUnitPose: return "NonUnitPose";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::EmptyComposition: return "EmptyComposition";
    case ErrorCode::InvalidChain: return "InvalidChain";
    case ErrorCode::UnsupportedPair: return "UnsupportedPair";
    case ErrorCode::AttachmentMismatch: return "AttachmentMismatch";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::UnknownKey: return "UnknownKey";
    case ErrorCode::MissingField: return "MissingField";
    case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::NonUnitTarget: return "NonUnitTarget";
    case ErrorCode::ApertureOutOfRange: return "ApertureOutOfRange";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::BadVersion: return "BadVersion";
    case ErrorCode::BadLength: return "BadLength";
    case ErrorCode::NoAnchor: return "NoAnchor";
    case ErrorCode::UnknownBranch: return "UnknownBranch";
    case ErrorCode::DeltaOutOfBounds: return "DeltaOutOfBounds";
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
    case ErrorCode::CorruptRow: return "CorruptRow";
    case ErrorCode::MalformedMessage: return "MalformedMessage";
    case ErrorCode::UnknownType: return "UnknownType";
    case ErrorCode::BranchBusy: return "BranchBusy";
    case ErrorCode::NotController: return "NotController";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

/// Every domain failure in railkit is reported as an Error carrying a code.
/// `line` is set by the file parsers (1-based, 0 when not applicable).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, int line = 0)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code),
        line_(line),
        message_(message) {}

  ErrorCode code() const noexcept { return code_; }
  int line() const noexcept { return line_; }
  /// The message without the code prefix.
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorCode code_;
  int line_;
  std::string message_;
};

}  // namespace railkit
