#pragma once

#include <stdexcept>
#include <string>

namespace cld {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid or inconsistent configuration (mapped to CLI exit code 1).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values, degenerate norms and similar numeric failures.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Malformed or truncated files.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace cld
