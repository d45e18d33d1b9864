#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace faircal {

/// Base of every error raised by the toolkit. The CLI maps subclasses to
/// process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or option values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Input data violates a structural invariant (dimension mismatch, zero norm,
/// duplicate id, unknown attribute, ...).
class StructuralError : public Error {
 public:
  using Error::Error;
};

/// Malformed file content. Carries the 1-based line (text formats) or the byte
/// offset (binary formats) where parsing failed.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t location)
      : Error(what), location_(location) {}

  std::size_t location() const noexcept { return location_; }

 private:
  std::size_t location_;
};

/// A model could not be fitted (single-class set, non-convergence, ...).
class FitError : public Error {
 public:
  using Error::Error;
};

/// A metric is undefined on its input (empty slice, missing class).
class MetricError : public Error {
 public:
  using Error::Error;
};

/// Evaluation would leak calibration data (fit and eval folds overlap).
class ProtocolError : public Error {
 public:
  using Error::Error;
};

/// File system failures.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace faircal
