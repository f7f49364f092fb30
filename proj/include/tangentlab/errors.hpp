#pragma once

// Exception types shared across the library. Every message is prefixed with
// the operation that raised it so failures are attributable without a stack.

#include <stdexcept>
#include <string>

namespace tangentlab {

// Input shapes do not match the declared network / dataset dimensions.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A non-finite value appeared mid-computation (message names the layer/step).
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// The ridge-free kernel system could not be factorized even with jitter.
struct SingularKernelError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Training loss exceeded the divergence threshold or became non-finite.
struct DivergenceError : std::runtime_error {
  DivergenceError(const std::string& msg, int step_index)
      : std::runtime_error(msg), step(step_index) {}
  int step;
};

// Malformed external input (CSV/config); message carries a line number.
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A config parsed but failed validation; message lists offending fields.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Filesystem-level failure (missing file, refused overwrite, ...).
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace tangentlab
