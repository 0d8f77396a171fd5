#pragma once

#include <stdexcept>
#include <string>

namespace dermpipe {

enum class ErrorKind {
  DegenerateMask,
  ZeroChannel,
  TooFewLesions,
  EmptyClass,
  ShapeMismatch,
  NonFiniteLoss,
  MissingFeatures,
  CropTooLarge,
  IdMismatch,
  PoolTooLarge,
  UnknownLabel,
  EmptyClassRow,
  SingleClassLabels,
  InvalidArgument,
  Config,
  Io,
};

const char* to_string(ErrorKind kind);

// Every failure surfaced by the library carries a kind so the CLI can map
// it onto an exit code (I/O → 2, everything else → 1).
class PipelineError : public std::runtime_error {
 public:
  PipelineError(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace dermpipe
