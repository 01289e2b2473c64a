#pragma once

#include <stdexcept>
#include <string>

namespace pcp {

/// Bad input: malformed files, schema violations, invalid configuration.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numerical failure: non-finite losses, degenerate marginals, singular designs.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace pcp
