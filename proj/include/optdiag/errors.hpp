#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace optdiag {

// Base of every error this library throws. `kind()` is a stable,
// machine-readable tag used by the CLI error line.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept { return "error"; }
};

// Caller broke a precondition (dimension mismatch, out-of-range index).
class ContractViolation : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "contract_violation"; }
};

// NaN or Inf seen where a finite value is required.
class NumericalInputError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "numerical_input"; }
};

class DegenerateDirectionError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "degenerate_direction"; }
};

class ParseError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "parse_error"; }
};

class ConfigError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "config_error"; }
};

class IoError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "io_error"; }
};

class ProtocolError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "protocol_error"; }
};

class PlotError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "plot_error"; }
};

}  // namespace optdiag
