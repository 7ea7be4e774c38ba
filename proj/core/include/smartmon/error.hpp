#pragma once

#include <stdexcept>
#include <string>

namespace smartmon {

// Bad input: malformed documents, infeasible regimes, violated invariants. CLI exit 2.
struct ValidationError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Numerical breakdown: rank deficiency, positivity violations, bracketing failures. CLI exit 3.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace smartmon
