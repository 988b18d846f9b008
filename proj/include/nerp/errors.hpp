#pragma once

#include <stdexcept>

namespace nerp {

// Bad or missing input: files, configs, scene descriptions.
class InputFault : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised when a loss, gradient or parameter stops being finite.
class NumericFault : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace nerp
