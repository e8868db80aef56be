#pragma once

#include <stdexcept>
#include <string>

namespace emerg {

// Shape or width mismatch between operands.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A precondition of an operation was violated by the caller.
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

// Invalid configuration value, unknown key or inconsistent settings.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed dataset or schema input. Messages name the row and column.
struct IngestError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SamplingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct LookupError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Metric is undefined for the given input (e.g. AUC on single-class labels).
struct MetricError : std::domain_error {
  using std::domain_error::domain_error;
};

// A forward pass produced NaN or Inf.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace emerg
