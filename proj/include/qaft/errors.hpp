#pragma once

#include <stdexcept>
#include <string>

namespace qaft {

// Argument outside the mathematical domain of an operation (t < 0, p outside (0,1), ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Malformed input data, configuration, or model specification. The CLI maps this to exit code 2.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A numerical procedure failed (non-finite value, bracket failure, degenerate interval).
// The CLI maps this to exit code 3.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace qaft
