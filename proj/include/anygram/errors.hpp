#pragma once

#include <stdexcept>
#include <string>

namespace anygram {

// Invalid parameters or flag combinations. The CLI maps this to exit code 1.
class UsageError : public std::runtime_error {
 public:
  explicit UsageError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed, missing or inconsistent input data. CLI exit code 2.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace anygram
