#pragma once

#include <stdexcept>
#include <string>

namespace sealpose {

/// Precondition or shape violation by the caller.
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// NaN/Inf or an otherwise unusable numeric state.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed graph or skeleton structure (cycles, disconnected trees).
class StructuralError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File-format or filesystem failure; the message carries the path.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace sealpose
