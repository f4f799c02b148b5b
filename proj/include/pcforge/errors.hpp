#pragma once

#include <stdexcept>
#include <string>

namespace pcforge {

// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller violated a documented precondition (bad argument, contradictory
// events, unknown variable, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent input data: CSV, checkpoint, advice or BN files.
class DataError : public Error {
 public:
  using Error::Error;
};

// Non-finite values, divergence, conditioning on a null event.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class ConditioningError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace pcforge
