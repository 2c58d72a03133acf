#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace sevmix {

// Malformed input tokens (KABCO codes, area/lighting codes, CSV cells).
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Schema/spec vs data mismatches (missing columns, unknown covariates).
struct SchemaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite intermediate values, zero probabilities at working precision.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Optimizer failures; carries the best point reached so callers can inspect it.
struct EstimationError : std::runtime_error {
  explicit EstimationError(const std::string& msg) : std::runtime_error(msg) {}
  EstimationError(const std::string& msg, std::vector<double> best)
      : std::runtime_error(msg), best_point(std::move(best)) {}
  std::vector<double> best_point;
};

// Impossible relationships between inputs (e.g. subgroup LLs below the pooled LL).
struct ConsistencyError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace sevmix
