#pragma once

#include <stdexcept>
#include <string>

namespace elr {

// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shapes that do not fit the operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A caller broke a documented precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

// An object was used in a state that does not allow the call.
class StateError : public Error {
 public:
  using Error::Error;
};

// Malformed bytes in an input file.
class FormatError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// A computation produced NaN or infinity.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace elr
