#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cbias {

enum class ErrorKind {
  EmptyWord,
  DuplicateWord,
  UnknownSynonymWord,
  EmptyReference,
  EmptyCorpus,
  InvalidOrder,
  InvalidDiscount,
  MalformedHeader,
  CountMismatch,
  BadLogProb,
  ShapeMismatch,
  InvalidBeam,
  InvalidEmission,
  NonPositiveRate,
  InvalidEta,
  DecodeFailure,
  DimensionMismatch,
  OOVCharacter,
  IOFailure,
  ConfigError,
  UnknownSubcommand,
  ParseError,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::EmptyWord: return "EmptyWord";
    case ErrorKind::DuplicateWord: return "DuplicateWord";
    case ErrorKind::UnknownSynonymWord: return "UnknownSynonymWord";
    case ErrorKind::EmptyReference: return "EmptyReference";
    case ErrorKind::EmptyCorpus: return "EmptyCorpus";
    case ErrorKind::InvalidOrder: return "InvalidOrder";
    case ErrorKind::InvalidDiscount: return "InvalidDiscount";
    case ErrorKind::MalformedHeader: return "MalformedHeader";
    case ErrorKind::CountMismatch: return "CountMismatch";
    case ErrorKind::BadLogProb: return "BadLogProb";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::InvalidBeam: return "InvalidBeam";
    case ErrorKind::InvalidEmission: return "InvalidEmission";
    case ErrorKind::NonPositiveRate: return "NonPositiveRate";
    case ErrorKind::InvalidEta: return "InvalidEta";
    case ErrorKind::DecodeFailure: return "DecodeFailure";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::OOVCharacter: return "OOVCharacter";
    case ErrorKind::IOFailure: return "IOFailure";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::UnknownSubcommand: return "UnknownSubcommand";
    case ErrorKind::ParseError: return "ParseError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a machine-checkable kind.
/// what() reads "<Kind>: <detail>".
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& detail)
      : std::runtime_error(std::string(to_string(kind)) + ": " + detail),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& detail) {
  throw Error(kind, detail);
}

}  // namespace cbias
