#pragma once

#include <stdexcept>

namespace cmail {

// Shape mismatch between operands (messages name both shapes).
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Index outside a declared range (messages name the offending dimension).
struct BoundsError : std::out_of_range {
  using std::out_of_range::out_of_range;
};

// Input violates a documented precondition (non-normalized tensor, bad config, ...).
struct ValidationError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Reference to a slot/key that does not exist.
struct LookupError : std::out_of_range {
  using std::out_of_range::out_of_range;
};

// NaN/Inf surfaced where finite values are required.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace cmail
