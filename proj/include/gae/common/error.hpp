#pragma once

#include <stdexcept>
#include <string>

namespace gae {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad input supplied by the user: malformed files, missing artifacts,
/// out-of-range arguments. Maps to CLI exit code 1.
class UserError : public Error {
 public:
  using Error::Error;
};

/// A record violates a schema or domain invariant.
class ValidationError : public UserError {
 public:
  using UserError::UserError;
};

/// Cross-artifact consistency is broken (e.g. a pair whose positive is not
/// in its candidate pool). Maps to CLI exit code 2.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

/// The annotation endpoint could not be reached or kept failing.
class TransportError : public Error {
 public:
  using Error::Error;
};

/// The annotation endpoint answered with something unusable.
class ContentError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite value.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace gae
