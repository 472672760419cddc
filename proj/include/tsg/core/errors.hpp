#pragma once

#include <stdexcept>
#include <string>

namespace tsg {

// Base class for all library errors.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Operand shapes do not conform to an operation's rule.
struct ShapeError : Error {
  using Error::Error;
};

// A computation produced NaN/Inf or otherwise left the finite domain.
struct NumericError : Error {
  using Error::Error;
};

// A precondition of an operation was violated by the caller.
struct ContractError : Error {
  using Error::Error;
};

// A binary/text artifact on disk does not match its declared format.
struct FormatError : Error {
  using Error::Error;
};

// Semantically invalid data (e.g. an annotation outside its video).
struct ValidationError : Error {
  using Error::Error;
};

// Bad configuration key or value.
struct ConfigError : Error {
  using Error::Error;
};

// Filesystem-level failure.
struct IoError : Error {
  using Error::Error;
};

}  // namespace tsg
