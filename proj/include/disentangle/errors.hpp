#pragma once

#include <stdexcept>
#include <string>

namespace disentangle {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid argument to a numerical routine (negative count, nonpositive
// intensity, dimension mismatch).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Bad configuration: malformed config file, impossible basis settings.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Input data that cannot be turned into a panel.
class DataError : public Error {
 public:
  using Error::Error;
};

// A numerical procedure failed in a way the caller cannot recover from.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace disentangle
