// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>

namespace vp {

/// Tensor extents that violate an op's shape contract.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Invalid configuration value, unknown key or malformed config text.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Non-finite values reached a loss, gradient or optimizer update.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File-system and file-format failures.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace vp
