#pragma once

#include <stdexcept>
#include <string>

namespace zoneprior {

/// Malformed or unsupported file contents (bad magic, unknown dtype).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A value violates a type invariant or an operation precondition.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Requested crop or zone does not fit inside the grid.
class SizeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace zoneprior
