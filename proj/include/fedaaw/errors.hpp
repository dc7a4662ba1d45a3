#pragma once

#include <stdexcept>
#include <string>

namespace fedaaw {

/// Raised when a caller violates an operation's preconditions.
class InvalidInput : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A surface-distance metric was requested for a mask with no foreground.
class EmptyMaskError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// NaN or Inf appeared in parameters, gradients, or losses.
class NonFiniteError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace fedaaw
