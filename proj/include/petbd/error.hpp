#pragma once

#include <stdexcept>
#include <string>

namespace petbd {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Two operands live on grids of different size.
class GridMismatch : public Error {
public:
  using Error::Error;
};

/// Argument outside the documented domain of an operation.
class InvalidArgument : public Error {
public:
  using Error::Error;
};

/// Input that is formally valid but cannot be meaningful (e.g. an all-zero
/// image driving the PSF update).
class DegenerateInput : public Error {
public:
  using Error::Error;
};

/// A NaN or Inf appeared in an iterate.
class NumericFailure : public Error {
public:
  using Error::Error;
};

class ConfigError : public Error {
public:
  using Error::Error;
};

class IoError : public Error {
public:
  using Error::Error;
};

namespace detail {

inline void require_same_grid(std::size_t a, std::size_t b, const char *what) {
  if (a != b) {
    throw GridMismatch(std::string(what) + ": grid sizes differ (" + std::to_string(a) +
                       " vs " + std::to_string(b) + ")");
  }
}

} // namespace detail
} // namespace petbd
