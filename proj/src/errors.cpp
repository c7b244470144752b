#include "expforce/errors.hpp"

namespace expforce {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::MissingManifest: return "MissingManifest";
    case ErrorCode::SchemaViolation: return "SchemaViolation";
    case ErrorCode::DanglingImageRef: return "DanglingImageRef";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::TooFewRecords: return "TooFewRecords";
    case ErrorCode::ForceCapExceeded: return "ForceCapExceeded";
    case ErrorCode::AuthMissing: return "AuthMissing";
    case ErrorCode::TransportError: return "TransportError";
    case ErrorCode::ModelRefusal: return "ModelRefusal";
    case ErrorCode::ProviderError: return "ProviderError";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::CacheCorruption: return "CacheCorruption";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::MissingImage: return "MissingImage";
    case ErrorCode::Unparseable: return "Unparseable";
    case ErrorCode::EmptyDescription: return "EmptyDescription";
    case ErrorCode::EmptyRetrieval: return "EmptyRetrieval";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::InvalidK: return "InvalidK";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

SchemaViolation::SchemaViolation(std::string record_id, std::string field, const std::string& detail)
    : Error(ErrorCode::SchemaViolation,
            "record '" + record_id + "', field '" + field + "': " + detail),
      record_id_(std::move(record_id)),
      field_(std::move(field)) {}

void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

}  // namespace expforce
