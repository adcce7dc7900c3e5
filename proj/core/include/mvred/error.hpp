#pragma once

#include <stdexcept>
#include <string>

namespace mvred {

// Base class for all library errors. The CLI maps the three subclasses
// onto distinct exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid parameters, malformed configuration, inconsistent arguments.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// File system and (de)serialization failures.
class IoError : public Error {
 public:
  using Error::Error;
};

// Numerical or data-content failures (non-finite input, size mismatches
// detected mid-computation).
class ComputeError : public Error {
 public:
  using Error::Error;
};

}  // namespace mvred
