#pragma once

#include <stdexcept>
#include <string>

namespace fassist {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input file.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// A caller violated an operation's precondition (empty query, bad k, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Invalid pipeline configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace fassist
