#pragma once

#include <stdexcept>
#include <string>

namespace noonfi {

/// Input outside the domain an operation is defined on.
class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A computed quantity violated an internal invariant (e.g. a probability
/// law evaluated noticeably outside [0, 1]).
class ConsistencyError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Malformed input file or configuration.
class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace noonfi
