#pragma once

#include <stdexcept>
#include <string>

namespace cadpu {

// File/content problems (missing files, malformed records, bad sizes on disk).
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Numerical failures (non-convergence, NaN/Inf in a computation).
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace cadpu
