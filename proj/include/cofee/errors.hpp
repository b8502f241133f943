#pragma once

#include <stdexcept>
#include <string>

namespace cofee {

enum class ErrorCode {
  // core / datasets
  DuplicateEntityId,
  MissingOutcome,
  EmptyDataset,
  DatasetOverlap,
  InvalidRole,
  // ingest
  ParseFailure,
  InsufficientRecords,
  // backend
  TransportError,
  ReplayMiss,
  ProviderRejection,
  UnknownSchema,
  // agents
  SchemaViolation,
  SubgoalViolation,
  UnknownMemberId,
  OverlappingMergeGroups,
  UnknownEntityId,
  // metrics
  ZeroSupport,
  FullSupport,
  InvalidCounts,
  EmptyInput,
  DivisionByZero,
  // evaluation
  EmptyFeatureSet,
  LeakageDetected,
  // synth
  InfeasiblePlan,
  DuplicateTrigger,
  // configuration / CLI
  ConfigError,
};

inline const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::DuplicateEntityId: return "DuplicateEntityId";
    case ErrorCode::MissingOutcome: return "MissingOutcome";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::DatasetOverlap: return "DatasetOverlap";
    case ErrorCode::InvalidRole: return "InvalidRole";
    case ErrorCode::ParseFailure: return "ParseError";
    case ErrorCode::InsufficientRecords: return "InsufficientRecords";
    case ErrorCode::TransportError: return "TransportError";
    case ErrorCode::ReplayMiss: return "ReplayMiss";
    case ErrorCode::ProviderRejection: return "ProviderRejection";
    case ErrorCode::UnknownSchema: return "UnknownSchema";
    case ErrorCode::SchemaViolation: return "SchemaViolation";
    case ErrorCode::SubgoalViolation: return "SubgoalViolation";
    case ErrorCode::UnknownMemberId: return "UnknownMemberId";
    case ErrorCode::OverlappingMergeGroups: return "OverlappingMergeGroups";
    case ErrorCode::UnknownEntityId: return "UnknownEntityId";
    case ErrorCode::ZeroSupport: return "ZeroSupport";
    case ErrorCode::FullSupport: return "FullSupport";
    case ErrorCode::InvalidCounts: return "InvalidCounts";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::DivisionByZero: return "DivisionByZero";
    case ErrorCode::EmptyFeatureSet: return "EmptyFeatureSet";
    case ErrorCode::LeakageDetected: return "LeakageDetected";
    case ErrorCode::InfeasiblePlan: return "InfeasiblePlan";
    case ErrorCode::DuplicateTrigger: return "DuplicateTrigger";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "UnknownError";
}

/// Exception carrying a stable error code alongside the message. The code,
/// not the message text, is the contract tests and the CLI exit mapping key on.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code),
        message_(message) {}

  ErrorCode code() const noexcept { return code_; }

  /// The message without the code-name prefix, for rewrapping.
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorCode code_;
  std::string message_;
};

/// Parse failure with 1-based line localization (0 = whole file).
class ParseError : public Error {
 public:
  ParseError(int line, const std::string& message)
      : Error(ErrorCode::ParseFailure,
              line > 0 ? "line " + std::to_string(line) + ": " + message : message),
        line_(line) {}

  int line() const noexcept { return line_; }

 private:
  int line_;
};

}  // namespace cofee
