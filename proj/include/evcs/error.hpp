#pragma once

#include <stdexcept>
#include <string>

namespace evcs {

/// Base class for all library errors.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Input data violates a documented contract (bad schema, broken invariant).
class ValidationError : public Error {
  public:
    using Error::Error;
};

/// File could not be read or written, or the configuration is malformed.
class IoError : public Error {
  public:
    using Error::Error;
};

} // namespace evcs
