#pragma once

#include <stdexcept>
#include <string>

namespace metalab {

/// A computation produced NaN or Inf. The message names the offending op.
class NumericFault : public std::runtime_error {
 public:
  explicit NumericFault(const std::string& what) : std::runtime_error("numeric fault: " + what) {}
};

/// Misuse of the tape or mismatched shapes between cooperating objects.
class StructuralError : public std::logic_error {
 public:
  explicit StructuralError(const std::string& what) : std::logic_error("structural error: " + what) {}
};

/// Invalid argument supplied by a caller or a configuration file.
class UsageError : public std::invalid_argument {
 public:
  explicit UsageError(const std::string& what) : std::invalid_argument("usage error: " + what) {}
};

}  // namespace metalab
