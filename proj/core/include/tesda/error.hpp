#pragma once

#include <stdexcept>
#include <string>

namespace tesda {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input: bad arguments, failed invariants, inconsistent shapes.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// File could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// A file exists but its contents do not follow the expected layout
/// (bad magic, truncation, checksum mismatch).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Known magic with an unsupported format revision.
class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// Numerical failure: singular covariance, non-convergence, infeasible bound.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace tesda
