#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace netflow {

// Base of every error raised by the library. The CLI maps the concrete
// subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input file. Carries the 1-based line number when known (0 if not).
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : Error(line ? what + " (line " + std::to_string(line) + ")" : what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

enum class NumericalFault {
  invalid_state,        // covariance not symmetric PSD
  degenerate_prior,     // q <= 0
  out_of_range,         // moment target outside representable range
  no_convergence,       // root finder ran out of iterations
  indefinite_covariance,
  unsupported_model,    // e.g. singular G for backward sampling
};

class NumericalError : public Error {
 public:
  NumericalError(NumericalFault fault, const std::string& what)
      : Error(what), fault_(fault) {}
  NumericalFault fault() const noexcept { return fault_; }

 private:
  NumericalFault fault_;
};

// A pipeline stage was run before the stage it depends on.
class DependencyError : public Error {
 public:
  using Error::Error;
};

}  // namespace netflow
