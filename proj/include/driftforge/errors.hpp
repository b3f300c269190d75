#pragma once

#include <stdexcept>
#include <string>

namespace driftforge {

// Bad inputs, broken invariants, mismatched hashes. CLI exit code 2.
struct ValidationError : std::runtime_error {
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values escaping a numerical routine. CLI exit code 3.
struct NumericalError : std::runtime_error {
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace driftforge
