#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gmix {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Mismatched vector or matrix dimensions.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A covariance or precision that should be SPD is not.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Evaluation point outside the support of a density.
class SupportError : public Error {
 public:
  using Error::Error;
};

/// Factorization failure, non-convergence, or non-finite arithmetic.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Invalid argument values (empty sample sets, bad counts, ...).
class ArgError : public Error {
 public:
  using Error::Error;
};

/// MCMC start point has non-finite log density.
class InitError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// MCMC chain produced too many consecutive non-finite proposals.
class DivergenceError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Truncated-normal acceptance probability too small to be practical.
class FeasibilityError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Optimizer failed to converge.
class OptimError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Invalid run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Generic file I/O failure (missing file, unwritable directory).
class IoError : public Error {
 public:
  using Error::Error;
};

/// Corrupt or truncated persisted file.
class FormatError : public IoError {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : IoError(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

}  // namespace gmix
