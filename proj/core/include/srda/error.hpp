#pragma once

#include <stdexcept>
#include <string>

namespace srda {

// Root of every error the library throws on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible tensor shapes; the message names the offending axis.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration, dataset or argument values.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Non-finite values where finite ones are required.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// I/O failures; the message carries the path.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace srda
