#pragma once

#include <stdexcept>
#include <string>

namespace syntempo {

// Every recoverable failure in the engine is thrown as an Error with a
// machine-checkable kind. The CLI maps kinds to exit codes (usage=2,
// data=3, internal=4).
enum class ErrorKind {
  // bracket parsing
  UnbalancedParens,
  EmptyLabel,
  TrailingContent,
  // corpus / library
  ParseError,
  LengthMismatch,
  EmptyLibrary,
  SampleTooLarge,
  IoError,
  FormatVersionMismatch,
  // model
  EmptyInput,
  DimMismatch,
  TraceMismatch,
  StaleCache,
  VersionMismatch,
  // trainer
  LibraryTooSmall,
  OracleMiss,
  NonFiniteLoss,
  ZeroVariance,
  // retrieval
  KTooLarge,
  NoPairings,
  // metrics
  EmptyCorpus,
  TooFewParaphrases,
  ParaphraseCountMismatch,
  MissingEmbedding,
  ZeroVector,
  // cli
  Usage,
};

const char* error_kind_name(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string message)
      : std::runtime_error(std::move(message)), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  const char* kind_name() const noexcept { return error_kind_name(kind_); }

 private:
  ErrorKind kind_;
};

}  // namespace syntempo
