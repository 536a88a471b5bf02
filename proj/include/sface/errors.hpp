#pragma once

#include <stdexcept>
#include <string>

namespace sface {

/// Thrown when a file or wire payload does not match its declared format
/// (bad magic, truncated stream, malformed header, undecodable field).
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

/// Thrown when a computation that must stay finite produces or receives
/// NaN/Inf (diverged loss, non-finite gradients).
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace sface
