#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ehrgen {

// Bad input: malformed files, out-of-range fields, violated preconditions.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Failure while running a well-formed request (non-finite loss, I/O write failure).
class RuntimeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ehrgen
