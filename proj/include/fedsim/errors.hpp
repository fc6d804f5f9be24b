#pragma once

#include <stdexcept>
#include <string>

namespace fedsim {

// Error taxonomy. The CLI maps these onto process exit codes:
// configuration/contract errors -> 1, file errors -> 2, numeric failures -> 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration values (dimensions, sizes, incompatible options).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Mismatched tensor/layout shapes between values that must agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Filesystem-level failures (missing file, unwritable directory).
class IoError : public Error {
 public:
  using Error::Error;
};

// Malformed file content; message carries the line number.
class ParseError : public IoError {
 public:
  using IoError::IoError;
};

// File parses but does not match the expected schema.
class SchemaError : public IoError {
 public:
  using IoError::IoError;
};

// Non-finite values produced during computation.
class NumericError : public Error {
 public:
  using Error::Error;
};

// A metric has no defined value on the given input (reported as missing).
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

}  // namespace fedsim
