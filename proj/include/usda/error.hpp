#pragma once

#include <stdexcept>
#include <string>

namespace usda {

/// Raised for invalid inputs: malformed files, violated preconditions, bad
/// configuration. The CLI maps it to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace usda
