#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace metaflow {

enum class ErrorCode {
  InvalidArgument,
  // records and tags
  EmptyText,
  TagCollision,
  UnknownTag,
  MalformedRecord,
  // claims
  NoClaimsFound,
  // files and tokenizer
  FileError,
  FormatError,
  UnknownToken,
  IdOutOfRange,
  // corpus
  EmptyStream,
  // model
  ContextOverflow,
  NonFiniteGradient,
  DropoutActive,
  ConfigMismatch,
  // generation
  EmptySeed,
  ModelVocabMismatch,
  // evaluation
  ProviderUnavailable,
  ZeroVector,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), message_(message) {}

  ErrorCode code() const noexcept { return code_; }
  // The message without the code prefix that what() carries.
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorCode code_;
  std::string message_;
};

// True for errors caused by bad input data rather than by the runtime.
bool is_data_error(ErrorCode code);

}  // namespace metaflow
