#pragma once

#include <stdexcept>
#include <string>

namespace nbs {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NotPositiveDefinite : public Error {
 public:
  using Error::Error;
};

class NonSymmetric : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

// Raised when a value, derivative, or loss leaves the finite reals.
class NonFinite : public Error {
 public:
  using Error::Error;
};

class NonFiniteDerivative : public NonFinite {
 public:
  using NonFinite::NonFinite;
};

class NonFiniteLoss : public NonFinite {
 public:
  using NonFinite::NonFinite;
};

class HorizonTooShort : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class MissingArtifact : public Error {
 public:
  using Error::Error;
};

}  // namespace nbs
