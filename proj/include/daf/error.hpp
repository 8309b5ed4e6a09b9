#pragma once

#include <stdexcept>
#include <string>

namespace daf {

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

/// Malformed, missing or out-of-range input data.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration or command-line usage.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A computation produced or met a value it cannot handle (non-finite loss,
/// undefined metric, gradient check failure).
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace daf
