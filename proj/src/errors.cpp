#include "dermpipe/errors.hpp"

namespace dermpipe {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::DegenerateMask: return "DegenerateMask";
    case ErrorKind::ZeroChannel: return "ZeroChannel";
    case ErrorKind::TooFewLesions: return "TooFewLesions";
    case ErrorKind::EmptyClass: return "EmptyClass";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::MissingFeatures: return "MissingFeatures";
    case ErrorKind::CropTooLarge: return "CropTooLarge";
    case ErrorKind::IdMismatch: return "IdMismatch";
    case ErrorKind::PoolTooLarge: return "PoolTooLarge";
    case ErrorKind::UnknownLabel: return "UnknownLabel";
    case ErrorKind::EmptyClassRow: return "EmptyClassRow";
    case ErrorKind::SingleClassLabels: return "SingleClassLabels";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::Config: return "ConfigError";
    case ErrorKind::Io: return "IoError";
  }
  return "Error";
}

}  // namespace dermpipe
