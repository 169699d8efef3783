#pragma once

#include <stdexcept>
#include <string>

namespace saol {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Tensor extents that do not line up.
class DimensionError : public Error {
public:
  using Error::Error;
};

// Bad argument value (empty axis set, non-scalar loss, batch too small).
class ArgumentError : public Error {
public:
  using Error::Error;
};

// Input outside the mathematical domain of an operation.
class DomainError : public Error {
public:
  using Error::Error;
};

// Invalid model, run, or backbone configuration.
class ConfigError : public Error {
public:
  using Error::Error;
};

// Malformed dataset or checkpoint bytes.
class FormatError : public Error {
public:
  using Error::Error;
};

// File could not be opened, read, or written.
class IoError : public Error {
public:
  using Error::Error;
};

} // namespace saol
