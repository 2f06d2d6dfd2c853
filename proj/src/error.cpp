#include "syntempo/error.hpp"

namespace syntempo {

const char* error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::UnbalancedParens: return "UnbalancedParens";
    case ErrorKind::EmptyLabel: return "EmptyLabel";
    case ErrorKind::TrailingContent: return "TrailingContent";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::EmptyLibrary: return "EmptyLibrary";
    case ErrorKind::SampleTooLarge: return "SampleTooLarge";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::FormatVersionMismatch: return "FormatVersionMismatch";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::DimMismatch: return "DimMismatch";
    case ErrorKind::TraceMismatch: return "TraceMismatch";
    case ErrorKind::StaleCache: return "StaleCache";
    case ErrorKind::VersionMismatch: return "VersionMismatch";
    case ErrorKind::LibraryTooSmall: return "LibraryTooSmall";
    case ErrorKind::OracleMiss: return "OracleMiss";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::ZeroVariance: return "ZeroVariance";
    case ErrorKind::KTooLarge: return "KTooLarge";
    case ErrorKind::NoPairings: return "NoPairings";
    case ErrorKind::EmptyCorpus: return "EmptyCorpus";
    case ErrorKind::TooFewParaphrases: return "TooFewParaphrases";
    case ErrorKind::ParaphraseCountMismatch: return "ParaphraseCountMismatch";
    case ErrorKind::MissingEmbedding: return "MissingEmbedding";
    case ErrorKind::ZeroVector: return "ZeroVector";
    case ErrorKind::Usage: return "Usage";
  }
  return "Unknown";
}

}  // namespace syntempo
