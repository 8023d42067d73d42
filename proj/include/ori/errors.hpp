#pragma once

#include <stdexcept>
#include <string>

namespace ori {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed input files or wire payloads. Messages carry file:line where known.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Violated preconditions and invariants (bad dimensions, empty inputs, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Network-level failure talking to a backend or embedding provider.
class TransportError : public Error {
 public:
  using Error::Error;
};

/// Backend did not answer within the configured deadline.
class TimeoutError : public TransportError {
 public:
  using TransportError::TransportError;
};

/// Backend answered, but not in the expected shape.
class BackendFormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace ori
