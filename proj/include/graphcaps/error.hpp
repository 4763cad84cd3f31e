#pragma once

#include <stdexcept>
#include <string>

namespace graphcaps {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A required file is missing or unreadable.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Input file content violates the expected layout.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// An argument lies outside the domain of the operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Input exceeds a configured size bound.
class CapacityError : public Error {
 public:
  using Error::Error;
};

/// Tensor shapes do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A model or experiment configuration is inconsistent.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite value.
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace graphcaps
