#pragma once

#include <stdexcept>
#include <string>

namespace covfun {

/// Bad input: a violated precondition or an unparseable configuration.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A computation that could not be carried out on valid-looking input.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Sample-size schedule that collapses after rounding.
class SchemeError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class EigenSolverError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Requested work exceeds the configured eigendecomposition budget.
class BudgetError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Failure inside one Monte Carlo replicate; carries the replicate index.
class ReplicateError : public NumericalError {
 public:
  ReplicateError(long replicate, const std::string& what)
      : NumericalError("replicate " + std::to_string(replicate) + ": " + what), replicate_(replicate) {}

  long replicate() const noexcept { return replicate_; }

 private:
  long replicate_;
};

namespace detail {

inline void require(bool condition, const std::string& message) {
  if (!condition) throw InvalidArgument(message);
}

}  // namespace detail
}  // namespace covfun
