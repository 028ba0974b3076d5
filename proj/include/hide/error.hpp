#pragma once

#include <stdexcept>
#include <string>

namespace hide {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A value or record violates a documented invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// An estimator was asked for a sample size it is not defined for.
class UnsupportedSampleSize : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Inconsistent or missing configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// The byte layout of a container is broken.
class FormatError : public Error {
 public:
  enum class Kind { malformed_metadata, magic_mismatch, unsupported_version, truncated, inconsistent };

  FormatError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// File system failure (cannot open, cannot write).
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace hide
