#pragma once

#include <stdexcept>
#include <string>

namespace waveforge {

// Base class for all library errors.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Operand shapes are incompatible; message names both shapes.
class ShapeError : public Error {
  public:
    using Error::Error;
};

// A parameter is outside its documented range.
class ValueError : public Error {
  public:
    using Error::Error;
};

// Non-finite value encountered where finiteness is required (loss, gradient).
class NumericError : public Error {
  public:
    using Error::Error;
};

// Filesystem / stream failure.
class IoError : public Error {
  public:
    using Error::Error;
};

// Malformed on-disk payload: bad magic, unsupported version, truncation.
class FormatError : public IoError {
  public:
    using IoError::IoError;
};

// Misuse of the recorded computation graph (non-scalar backward, re-running
// backward on an already consumed root).
class TapeError : public Error {
  public:
    using Error::Error;
};

} // namespace waveforge
