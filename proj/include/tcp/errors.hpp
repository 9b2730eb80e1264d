#pragma once

#include <stdexcept>
#include <string>

namespace tcp {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not fit the operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A structural invariant (symmetry, PSD, parameter naming) does not hold.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf where finite values are required, or a solver failed to converge.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Malformed or unreadable file.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration values (odd kernel sizes, widths, dataset specs).
class ConfigError : public Error {
 public:
  using Error::Error;
};

std::string shape_string(long rows, long cols);

}  // namespace tcp
