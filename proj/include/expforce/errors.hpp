#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace expforce {

enum class ErrorCode {
  InvalidArgument,
  IoFailure,
  MissingManifest,
  SchemaViolation,
  DanglingImageRef,
  DuplicateId,
  TooFewRecords,
  ForceCapExceeded,
  AuthMissing,
  TransportError,
  ModelRefusal,
  ProviderError,
  ZeroVector,
  CacheCorruption,
  DimensionMismatch,
  MissingImage,
  Unparseable,
  EmptyDescription,
  EmptyRetrieval,
  EmptyInput,
  InvalidK,
  ConfigError,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries one of the codes above so
/// callers (and tests) can branch on the kind without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Record-level validation failure; keeps the offending record id and field.
class SchemaViolation : public Error {
 public:
  SchemaViolation(std::string record_id, std::string field, const std::string& detail);

  const std::string& record_id() const noexcept { return record_id_; }
  const std::string& field() const noexcept { return field_; }

 private:
  std::string record_id_;
  std::string field_;
};

/// A model answered with nothing usable (empty or whitespace-only text).
/// Reported as ModelRefusal; callers that need to tell it apart catch this type.
class EmptyResponse : public Error {
 public:
  explicit EmptyResponse(const std::string& message) : Error(ErrorCode::ModelRefusal, message) {}
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

}  // namespace expforce
