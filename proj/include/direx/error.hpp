#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace direx {

enum class ErrorCode {
  IndivisibleLength,
  BadChunking,
  TooManyQubits,
  DimensionMismatch,
  BadSpec,
  UnsupportedK,
  WrongWidth,
  UnknownSetting,
  TooLargeK,
  InconsistentSpec,
  BadSetting,
  BadParameters,
  LengthMismatch,
  SeedTooShort,
  EnsembleReused,
  TooLarge,
  InvalidDistribution,
  BadEpsilon,
  TooFewSamples,
  ConfigError,
  InvariantViolation,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::IndivisibleLength: return "IndivisibleLength";
    case ErrorCode::BadChunking: return "BadChunking";
    case ErrorCode::TooManyQubits: return "TooManyQubits";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::BadSpec: return "BadSpec";
    case ErrorCode::UnsupportedK: return "UnsupportedK";
    case ErrorCode::WrongWidth: return "WrongWidth";
    case ErrorCode::UnknownSetting: return "UnknownSetting";
    case ErrorCode::TooLargeK: return "TooLargeK";
    case ErrorCode::InconsistentSpec: return "InconsistentSpec";
    case ErrorCode::BadSetting: return "BadSetting";
    case ErrorCode::BadParameters: return "BadParameters";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::SeedTooShort: return "SeedTooShort";
    case ErrorCode::EnsembleReused: return "EnsembleReused";
    case ErrorCode::TooLarge: return "TooLarge";
    case ErrorCode::InvalidDistribution: return "InvalidDistribution";
    case ErrorCode::BadEpsilon: return "BadEpsilon";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::InvariantViolation: return "InvariantViolation";
  }
  return "Unknown";
}

/// Exception carrying a machine-checkable error code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace direx
