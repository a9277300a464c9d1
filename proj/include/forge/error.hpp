#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace forge {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller broke a documented precondition (bad dims, empty input, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Filesystem or codec failure; message carries the path.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Manifest line that is not JSON, or JSON that violates the record schema.
class ManifestError : public Error {
 public:
  enum class Kind { Syntax, Schema };

  ManifestError(Kind kind, std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), kind_(kind), line_(line) {}

  Kind kind() const noexcept { return kind_; }
  std::size_t line() const noexcept { return line_; }

 private:
  Kind kind_;
  std::size_t line_;
};

/// An external hook (subprocess, validator, generator) failed to answer.
/// Distinct from a negative verdict, which is data.
class HookError : public Error {
 public:
  using Error::Error;
};

/// Numerical routine could not produce a model (degenerate input, no consensus).
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace forge
