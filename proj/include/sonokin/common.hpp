#ifndef SONOKIN_COMMON_HPP
#define SONOKIN_COMMON_HPP

#include <cstdio>
#include <stdexcept>
#include <string>

namespace sonokin {

enum class ErrorCode {
  // file formats / loading
  MagicMismatch,
  FormatVersionMismatch,
  TruncatedFrameData,
  NonMonotonicTimestamps,
  EmptyTrial,
  MalformedRow,
  ChecksumMismatch,
  IoFailure,
  // synchronization / gait
  NoOverlap,
  InsufficientEvents,
  TooFewSamples,
  EmptyInput,
  // features
  FrameTooSmall,
  ZeroTimeDelta,
  TooFewFrames,
  MisalignedRows,
  AnisotropicSpacing,
  // gpr
  DimensionMismatch,
  NotPositiveDefinite,
  DegenerateTargets,
  TooFewRows,
  // experiment
  TooFewStrides,
  TooFewTrials,
  LengthMismatch,
  // stats
  IncompleteDesign,
  // cli / config
  ConfigError,
};

inline const char* error_code_name(ErrorCode c) {
  switch (c) {
    case ErrorCode::MagicMismatch: return "MagicMismatch";
    case ErrorCode::FormatVersionMismatch: return "FormatVersionMismatch";
    case ErrorCode::TruncatedFrameData: return "TruncatedFrameData";
    case ErrorCode::NonMonotonicTimestamps: return "NonMonotonicTimestamps";
    case ErrorCode::EmptyTrial: return "EmptyTrial";
    case ErrorCode::MalformedRow: return "MalformedRow";
    case ErrorCode::ChecksumMismatch: return "ChecksumMismatch";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::NoOverlap: return "NoOverlap";
    case ErrorCode::InsufficientEvents: return "InsufficientEvents";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::FrameTooSmall: return "FrameTooSmall";
    case ErrorCode::ZeroTimeDelta: return "ZeroTimeDelta";
    case ErrorCode::TooFewFrames: return "TooFewFrames";
    case ErrorCode::MisalignedRows: return "MisalignedRows";
    case ErrorCode::AnisotropicSpacing: return "AnisotropicSpacing";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::DegenerateTargets: return "DegenerateTargets";
    case ErrorCode::TooFewRows: return "TooFewRows";
    case ErrorCode::TooFewStrides: return "TooFewStrides";
    case ErrorCode::TooFewTrials: return "TooFewTrials";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::IncompleteDesign: return "IncompleteDesign";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

/// Exception carrying a machine-checkable code alongside the message.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + what),
        code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

// Fixed-format float rendering so emitted files are identical across runs.
inline std::string format_double(double v, int precision = 9) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*g", precision, v);
  return buf;
}

inline std::string format_fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
  return buf;
}

}  // namespace sonokin

#endif  // SONOKIN_COMMON_HPP
