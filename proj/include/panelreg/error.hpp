#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace panelreg {

// Base of every error raised by the engine. The CLI maps the concrete
// subclasses onto its exit-code classes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A record that cannot be decoded. `line` is the 1-based physical line of a
// text file (header is line 1) or the 1-based record index of a binary file;
// 0 when the error is not tied to a record.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::uint64_t line);
  std::uint64_t line() const { return line_; }

 private:
  std::uint64_t line_;
};

// Input data violates a modelling assumption (non-absorbing treatment,
// staggered adoption fed to a one-shot estimator, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// A later pass saw data that the first pass did not.
class ConsistencyError : public Error {
 public:
  using Error::Error;
};

// Invalid estimator spec, flag combination or configuration document.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// The least-squares problem cannot be solved as posed.
class EstimationError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

// Resampling inference could not produce a usable answer.
class InferenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace panelreg
