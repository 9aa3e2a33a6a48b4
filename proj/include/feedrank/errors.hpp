#pragma once

#include <stdexcept>
#include <string>

namespace feedrank {

// Shape or dimension mismatch in tensor arithmetic.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Out-of-range id in an embedding table or catalog.
struct LookupError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Violated API precondition (non-scalar loss, empty sequence, ...).
struct ContractError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed input file; message carries the line number where known.
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Structurally valid input that violates a domain invariant.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad configuration key or value.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Training aborted (non-finite loss, empty dataset).
struct TrainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace feedrank
