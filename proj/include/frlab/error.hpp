#pragma once

#include <stdexcept>
#include <string>

namespace frlab {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on the inputs was violated (bad sizes, wrong manifold,
/// non-positive density, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A computation left its resolvable regime: non-positive Jacobian,
/// Newton failure, eigensolver breakdown, residual far above tolerance.
class NumericalError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw InvalidArgument(what);
}

}  // namespace detail
}  // namespace frlab
