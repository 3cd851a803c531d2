#pragma once

#include <stdexcept>
#include <string>

namespace partpose {

// Thrown for malformed inputs: bad skeletons, mismatched grid shapes,
// invalid configuration values. The CLI maps these to exit code 1.
struct ValidationError : std::runtime_error {
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DuplicateEdgeError : ValidationError {
  using ValidationError::ValidationError;
};
struct DanglingEndpointError : ValidationError {
  using ValidationError::ValidationError;
};
struct NotATreeError : ValidationError {
  using ValidationError::ValidationError;
};
struct DimMismatchError : ValidationError {
  using ValidationError::ValidationError;
};
struct ChannelMismatchError : ValidationError {
  using ValidationError::ValidationError;
};
struct IndivisibleDimsError : ValidationError {
  using ValidationError::ValidationError;
};
struct NoLabeledKeypointsError : ValidationError {
  using ValidationError::ValidationError;
};
struct InfeasibleConstraintsError : ValidationError {
  using ValidationError::ValidationError;
};

// Filesystem failures. The CLI maps these to exit code 2.
struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace partpose
