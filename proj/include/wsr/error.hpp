#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace wsr {

// Base of every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor extents or parameter shapes that do not fit the operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// NaN or Inf in a value that must be finite.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

// A precondition on an argument value (not a shape) was violated.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Autograd misuse: backward on a foreign or already-consumed tape.
class TapeError : public Error {
 public:
  using Error::Error;
};

// File-format errors. Each failure mode has its own type so callers and
// tests can tell them apart.
class FormatError : public Error {
 public:
  using Error::Error;
};

class BadMagicError : public FormatError {
 public:
  using FormatError::FormatError;
};

class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

class TruncatedError : public FormatError {
 public:
  using FormatError::FormatError;
};

class CountMismatchError : public FormatError {
 public:
  using FormatError::FormatError;
};

// Checkpoint manifest does not match the architecture it is loaded into.
class ParamMismatchError : public FormatError {
 public:
  using FormatError::FormatError;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Training aborted because the loss left the finite range.
class NonFiniteLossError : public NonFiniteError {
 public:
  NonFiniteLossError(std::size_t step, const std::string& what)
      : NonFiniteError(what), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

}  // namespace wsr
