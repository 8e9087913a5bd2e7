#pragma once

#include <stdexcept>
#include <string>

namespace otreg {

// Shape disagreement between operands.
struct dimension_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Input outside an operation's mathematical domain (log of nonpositive
// entries, zero-norm rows, non-scalar backward roots, ...).
struct domain_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Overflow / divergence / non-finite values produced at runtime.
struct numeric_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// File and format problems (bad magic, truncation, parse failures).
struct io_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace otreg
