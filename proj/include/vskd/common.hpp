#pragma once

#include <stdexcept>
#include <string>

namespace vskd {

/// Thrown when an argument violates a documented precondition.
struct InvalidInput : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Thrown when a file artifact (checkpoint, raw tensor dump) is missing,
/// truncated, or carries a bad magic/version.
struct ArtifactError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Thrown when an optimization run produces a non-finite loss.
struct TrainingFailure : std::runtime_error {
  int epoch;
  TrainingFailure(int epoch_, const std::string& msg)
      : std::runtime_error(msg), epoch(epoch_) {}
};

}  // namespace vskd
