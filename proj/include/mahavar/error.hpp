#pragma once

#include <stdexcept>
#include <string>

namespace mahavar {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input violates a precondition or an invariant (bad shapes, NaN, label out
/// of range, malformed container, inconsistent configuration).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// File system failure: missing file, unwritable directory, short read.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace mahavar
