#pragma once

#include <stdexcept>
#include <string>

namespace wavepinn {

/// Input outside the mathematical domain of an operation (non-positive depth, empty region, ...).
class DomainError : public std::domain_error {
  public:
    using std::domain_error::domain_error;
};

/// Non-finite values encountered during evaluation or training.
class NumericError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Invalid or inconsistent configuration.
class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Operation invoked on an object in the wrong lifecycle state.
class StateError : public std::logic_error {
  public:
    using std::logic_error::logic_error;
};

/// Unsupported primitive or shape mismatch while building a computation.
class ConstructionError : public std::logic_error {
  public:
    using std::logic_error::logic_error;
};

/// File format or I/O failure.
class IoError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

}  // namespace wavepinn
