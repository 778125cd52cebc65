#pragma once

#include <stdexcept>
#include <string>

namespace artgest {

enum class ErrorCode {
  // data ingestion
  MalformedAnnotation,
  UnknownLabel,
  DanglingImageRef,
  UnknownSplit,
  EmptyCrop,
  ImageDecodeError,
  // model
  UnknownBackbone,
  PretrainedWeightsUnavailable,
  ShapeMismatch,
  VersionMismatch,
  CorruptCheckpoint,
  VariantMismatch,
  // training
  LabelOutOfRange,
  AllZeroCounts,
  DivergenceDetected,
  // evaluation
  LengthMismatch,
  IdOutOfRange,
  EmptyInput,
  // inference
  MalformedDetections,
  AdapterUnavailable,
  // cli / config
  UnknownKey,
  ConfigTypeError,
  // generic
  InvalidArgument,
  IoError,
};

inline const char* to_string(ErrorCode c) {
  switch (c) {
    case ErrorCode::MalformedAnnotation: return "MalformedAnnotation";
    case ErrorCode::UnknownLabel: return "UnknownLabel";
    case ErrorCode::DanglingImageRef: return "DanglingImageRef";
    case ErrorCode::UnknownSplit: return "UnknownSplit";
    case ErrorCode::EmptyCrop: return "EmptyCrop";
    case ErrorCode::ImageDecodeError: return "ImageDecodeError";
    case ErrorCode::UnknownBackbone: return "UnknownBackbone";
    case ErrorCode::PretrainedWeightsUnavailable: return "PretrainedWeightsUnavailable";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::CorruptCheckpoint: return "CorruptCheckpoint";
    case ErrorCode::VariantMismatch: return "VariantMismatch";
    case ErrorCode::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::AllZeroCounts: return "AllZeroCounts";
    case ErrorCode::DivergenceDetected: return "DivergenceDetected";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::IdOutOfRange: return "IdOutOfRange";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::MalformedDetections: return "MalformedDetections";
    case ErrorCode::AdapterUnavailable: return "AdapterUnavailable";
    case ErrorCode::UnknownKey: return "UnknownKey";
    case ErrorCode::ConfigTypeError: return "ConfigTypeError";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::IoError: return "IoError";
  }
  return "UnknownError";
}

/// Library-wide exception. Carries a machine-readable code next to the
/// human-readable message so callers can branch without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool ok, ErrorCode code, const std::string& message) {
  if (!ok) fail(code, message);
}

}  // namespace artgest
