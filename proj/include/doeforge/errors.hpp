#pragma once

#include <stdexcept>
#include <string>

namespace doeforge {

// Bad input: malformed files, violated preconditions, inconsistent configs.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Runtime numerical failure: non-finite values, solver breakdown.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace doeforge
