#pragma once

#include <stdexcept>
#include <string>

namespace nlbt {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Inconsistent matrix or field dimensions; the message names the coefficient.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A matrix that must be (semi)definite is not.
class DefinitenessError : public Error {
 public:
  using Error::Error;
};

/// A coefficient does not vanish at the origin.
class OriginViolation : public Error {
 public:
  using Error::Error;
};

/// The generalized Lyapunov operator is singular or not stable.
class InstabilityError : public Error {
 public:
  using Error::Error;
};

/// The one-sided Lipschitz estimate produced a non-positive decay rate.
class LipschitzFailure : public Error {
 public:
  using Error::Error;
};

/// A Gramian inequality could not be certified.
class CertificationError : public Error {
 public:
  using Error::Error;
};

/// The error bound was requested for coefficients that are not point symmetric.
class SymmetryRequired : public Error {
 public:
  using Error::Error;
};

/// Too many simulated paths diverged.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// Bad user input (configuration, ranges, empty plans).
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace nlbt
