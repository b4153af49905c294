#pragma once

#include <stdexcept>
#include <string>

namespace gatpos {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// file missing / unreadable
struct LoadError : Error {
  using Error::Error;
};

// malformed file contents
struct FormatError : Error {
  using Error::Error;
};

// index out of range
struct RangeError : Error {
  using Error::Error;
};

// tensor dimension mismatch
struct ShapeError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

// API precondition violated
struct ContractError : Error {
  using Error::Error;
};

struct SplitError : Error {
  using Error::Error;
};

struct ValidationError : Error {
  using Error::Error;
};

}  // namespace gatpos
