#pragma once

#include <stdexcept>
#include <string>

namespace mcmlp {

// Base of every error the library throws. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible tensor or buffer shapes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A configuration or argument violates a documented constraint.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Malformed on-disk data (dataset files, config files, checkpoints).
class FormatError : public Error {
 public:
  using Error::Error;
};

class ChecksumError : public FormatError {
 public:
  using FormatError::FormatError;
};

class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

// Checkpoint tensors disagree with the embedded model config.
class CheckpointShapeError : public FormatError {
 public:
  using FormatError::FormatError;
};

// NaN/Inf encountered in a loss, gradient or parameter.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace mcmlp
