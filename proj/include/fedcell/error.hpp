#pragma once

#include <stdexcept>
#include <string>

namespace fedcell {

/// Raised for invalid inputs, malformed documents and contract violations.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace fedcell
