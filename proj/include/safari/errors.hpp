#pragma once

#include <stdexcept>
#include <string>

namespace safari {

/// Thrown when vector or matrix dimensions disagree with a network or environment.
class ShapeError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown when a computation produces NaN or infinity where finite values are required.
class NumericError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Thrown for invalid configuration values or violated preconditions.
class ConfigError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

} // namespace safari
