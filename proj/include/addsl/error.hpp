#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace addsl {

enum class ErrorCode {
  DegenerateBox,
  BoxOutOfBounds,
  MalformedLine,
  ClassOutOfRange,
  BadLabelMap,
  BadManifest,
  IoFailure,
  UnsupportedFormat,
  TruncatedData,
  BadHeader,
  IndexOutOfRange,
  DegenerateSplit,
  InvalidArgument,
  CellCollision,
  ShapeMismatch,
  BadConfig,
  Diverged,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::DegenerateBox: return "DegenerateBox";
    case ErrorCode::BoxOutOfBounds: return "BoxOutOfBounds";
    case ErrorCode::MalformedLine: return "MalformedLine";
    case ErrorCode::ClassOutOfRange: return "ClassOutOfRange";
    case ErrorCode::BadLabelMap: return "BadLabelMap";
    case ErrorCode::BadManifest: return "BadManifest";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::TruncatedData: return "TruncatedData";
    case ErrorCode::BadHeader: return "BadHeader";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::DegenerateSplit: return "DegenerateSplit";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::CellCollision: return "CellCollision";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::BadConfig: return "BadConfig";
    case ErrorCode::Diverged: return "Diverged";
  }
  return "Unknown";
}

/// Every failure raised by the library. The code identifies the failure
/// class; the message is human-readable context.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Parse failure tied to a location in a text input.
class ParseError : public Error {
 public:
  ParseError(ErrorCode code, std::size_t line, std::string token, const std::string& message)
      : Error(code, "line " + std::to_string(line) + ", token '" + token + "': " + message),
        line_(line),
        token_(std::move(token)) {}

  std::size_t line() const noexcept { return line_; }
  const std::string& token() const noexcept { return token_; }

 private:
  std::size_t line_;
  std::string token_;
};

}  // namespace addsl
