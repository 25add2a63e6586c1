// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace rcf {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor extents, ranks or dtypes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf produced where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Malformed files: images, checkpoints, config text.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration values or arguments.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace rcf
