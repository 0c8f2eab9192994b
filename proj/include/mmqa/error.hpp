#pragma once

#include <stdexcept>
#include <string>

namespace mmqa {

/// Process exit codes shared by every CLI command.
enum class ExitCode : int {
  ok = 0,
  validation = 1,
  numerical = 2,
  io = 3,
};

class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shape disagreement between tensor operands.
class ShapeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// NaN/Inf or diverging loss.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mmqa
