#pragma once

#include <stdexcept>
#include <string>

namespace flimzs {

// Base of every error the library throws. Callers that only care about
// "something went wrong" catch this; the CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor or image extents that do not fit an operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Invalid user-supplied parameters (scene, noise, optimizer, CLI flags).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// API misuse: backward on a non-scalar, stepping without gradients, ...
class ContractError : public Error {
 public:
  using Error::Error;
};

// Mathematical domain violation, e.g. negative lifetime.
class DomainError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf produced by a forward op or a loss.
class NumericError : public Error {
 public:
  NumericError(std::string op, const std::string& what)
      : Error(what), op_(std::move(op)) {}
  const std::string& op() const noexcept { return op_; }

 private:
  std::string op_;
};

// Metric evaluation impossible, e.g. an empty lifetime mask.
class EvaluationError : public Error {
 public:
  using Error::Error;
};

// File system or container format failure.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace flimzs
