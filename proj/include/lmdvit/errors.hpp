#pragma once

#include <stdexcept>
#include <string>

namespace lmdvit {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor extents do not agree with what an operation needs.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// An API was called in a state or with arguments it does not accept.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// A model/run configuration is inconsistent.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A file (checkpoint, image, manifest) is malformed.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// A non-finite value was produced.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace lmdvit
