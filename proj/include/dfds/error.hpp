#pragma once

#include <stdexcept>
#include <string>

namespace dfds {

// Error categories map one-to-one onto CLI exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad flags, unknown model names, malformed config files. Exit code 1.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Malformed or insufficient input data. Exit code 2.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Non-finite losses or gradients, failed gradient checks. Exit code 3.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Inconsistent matrix shapes passed to a numeric routine.
class ShapeError : public Error {
 public:
  using Error::Error;
};

}  // namespace dfds
