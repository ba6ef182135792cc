#pragma once

#include <stdexcept>
#include <string>

namespace hygen {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input file content.
class ParseError : public Error {
 public:
  using Error::Error;
};

// Values that parse but violate a documented precondition.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Not enough requests to satisfy a sampling request.
class CapacityError : public Error {
 public:
  CapacityError(const std::string& what, long long available)
      : Error(what), available_(available) {}
  long long available() const { return available_; }

 private:
  long long available_;
};

// Caller broke an operation contract (unknown id, duplicate insert, ...).
class ContractViolation : public Error {
 public:
  using Error::Error;
};

// Least-squares fit could not be performed.
class FitError : public Error {
 public:
  using Error::Error;
};

// The profiler's lower budget bound is already non-compliant.
class InfeasibleRangeError : public Error {
 public:
  using Error::Error;
};

// A runtime safety invariant was breached (budget overrun, deadlock).
class InvariantBreach : public Error {
 public:
  using Error::Error;
};

}  // namespace hygen
