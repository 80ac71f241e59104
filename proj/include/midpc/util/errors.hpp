#pragma once

#include <stdexcept>
#include <string>

namespace midpc {

/// Operand dimensions disagree with what an operation requires.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A configuration value is outside the range an operation accepts.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A caller broke an API precondition (e.g. backward() on a non-scalar).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// NaN/Inf encountered where finite values are required.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace midpc
