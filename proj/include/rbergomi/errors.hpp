#pragma once

#include <stdexcept>
#include <string>

namespace rbergomi {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// numerics
struct NotPSD : Error {
  using Error::Error;
};
struct ToleranceUnreachable : Error {
  using Error::Error;
};
struct DuplicateKnots : Error {
  using Error::Error;
};

// autodiff
struct ShapeError : Error {
  using Error::Error;
};

// pricing / market data
struct OutOfBounds : Error {
  using Error::Error;
};
struct ParseError : Error {
  using Error::Error;
};
struct SchemaError : Error {
  using Error::Error;
};
struct MissingStrike : Error {
  using Error::Error;
};

// pipeline
struct ConfigError : Error {
  using Error::Error;
};
struct NumericalFailure : Error {
  using Error::Error;
};

}  // namespace rbergomi
