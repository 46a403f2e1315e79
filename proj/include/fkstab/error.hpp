#pragma once

#include <stdexcept>
#include <string>

namespace fkstab {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Rejected input: malformed model, bad parameter, unknown config key.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Floating-point breakdown that valid inputs should never produce.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace fkstab
