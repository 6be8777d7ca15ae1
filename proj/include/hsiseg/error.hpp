#pragma once

#include <stdexcept>
#include <string>

namespace hsiseg {

// Base of every error the library throws. The CLI maps IoError and its
// subclasses to exit code 2 and everything else to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Bad magic, unknown version, or an unparsable header.
class FormatError : public IoError {
 public:
  using IoError::IoError;
};

// Payload shorter than its header declares.
class LengthError : public IoError {
 public:
  using IoError::IoError;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class UnsupportedConfigError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class DegenerateDataError : public NumericError {
 public:
  using NumericError::NumericError;
};

// A ratio or metric whose denominator is zero for the given data.
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

}  // namespace hsiseg
