#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace persona {

enum class Errc {
  EmptyParse,
  GenerationBudgetExceeded,
  PreconditionFailed,
  OddGroupSize,
  CoTParseError,
  EmptyAfterStrip,
  TooFewCandidates,
  MalformedVerdict,
  TournamentIncomplete,
  InsufficientShots,
  MissingGold,
  MissingPrefix,
  LengthMismatch,
  NoPairableValues,
  FormatError,
  CorruptManifest,
  MissingArtifact,
  TransportError,
  RateLimited,
  ScoringUnsupported,
  DimensionMismatch,
  FixtureMiss,
  ConfigError,
};

std::string_view errc_name(Errc code) noexcept;

/// All pipeline failures surface as this exception; `code()` identifies the
/// contract that was violated.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

/// Thrown by parse_judge_response; carries the first index that failed.
class MalformedVerdictError : public Error {
 public:
  MalformedVerdictError(std::size_t index, const std::string& what)
      : Error(Errc::MalformedVerdict, what), index_(index) {}

  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

/// Provider-side rate limit; retry_after_ms is 0 when the server gave no hint.
class RateLimitedError : public Error {
 public:
  RateLimitedError(long retry_after_ms, const std::string& what)
      : Error(Errc::RateLimited, what), retry_after_ms_(retry_after_ms) {}

  long retry_after_ms() const noexcept { return retry_after_ms_; }

 private:
  long retry_after_ms_;
};

}  // namespace persona
