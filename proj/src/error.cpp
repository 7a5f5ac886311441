#include "metaflow/error.hpp"

namespace metaflow {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::EmptyText: return "EmptyText";
    case ErrorCode::TagCollision: return "TagCollision";
    case ErrorCode::UnknownTag: return "UnknownTag";
    case ErrorCode::MalformedRecord: return "MalformedRecord";
    case ErrorCode::NoClaimsFound: return "NoClaimsFound";
    case ErrorCode::FileError: return "FileError";
    case ErrorCode::FormatError: return "FormatError";
    case ErrorCode::UnknownToken: return "UnknownToken";
    case ErrorCode::IdOutOfRange: return "IdOutOfRange";
    case ErrorCode::EmptyStream: return "EmptyStream";
    case ErrorCode::ContextOverflow: return "ContextOverflow";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::DropoutActive: return "DropoutActive";
    case ErrorCode::ConfigMismatch: return "ConfigMismatch";
    case ErrorCode::EmptySeed: return "EmptySeed";
    case ErrorCode::ModelVocabMismatch: return "ModelVocabMismatch";
    case ErrorCode::ProviderUnavailable: return "ProviderUnavailable";
    case ErrorCode::ZeroVector: return "ZeroVector";
  }
  return "Unknown";
}

bool is_data_error(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptyText:
    case ErrorCode::TagCollision:
    case ErrorCode::UnknownTag:
    case ErrorCode::MalformedRecord:
    case ErrorCode::NoClaimsFound:
    case ErrorCode::FileError:
    case ErrorCode::FormatError:
    case ErrorCode::UnknownToken:
    case ErrorCode::IdOutOfRange:
    case ErrorCode::EmptyStream:
    case ErrorCode::ConfigMismatch:
    case ErrorCode::EmptySeed:
    case ErrorCode::ModelVocabMismatch:
      return true;
    default:
      return false;
  }
}

}  // namespace metaflow
