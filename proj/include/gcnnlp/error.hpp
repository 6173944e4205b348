#pragma once

#include <stdexcept>
#include <string>

namespace gcnnlp {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file (OFF, cache, checkpoint, manifest, config).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// A mesh or sample violates a structural invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Tensor or layer dimensions do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// File system failure.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace gcnnlp
