#pragma once

#include <stdexcept>
#include <string>

namespace diar {

// Error taxonomy shared by the whole library. The C API and the CLI map
// these onto stable codes: config -> 1, data -> 2, numeric -> 3.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad configuration: unknown key, out-of-range value, unreachable target.
struct ConfigError : Error {
  using Error::Error;
};

// Bad input data: malformed file, wrong sample rate, mismatched ids.
struct DataError : Error {
  using Error::Error;
};

// Shape mismatch between operands.
struct DimensionError : DataError {
  using DataError::DataError;
};

// NaN/Inf reached a place it must not. Never silent.
struct NumericError : Error {
  using Error::Error;
};

}  // namespace diar
