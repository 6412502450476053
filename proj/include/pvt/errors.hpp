#pragma once

#include <stdexcept>
#include <string>

namespace pvt {

// Operand shapes do not chain (matmul inner dims, param widths, ...).
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// NaN or non-finite values where finite values are required.
struct NumericError : std::domain_error {
  using std::domain_error::domain_error;
};

// Invalid hyperparameters (W not dividing R, heads not dividing D, ...).
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Requests that exceed a configured size cap (dense oracle, RA point count).
struct CapacityError : std::length_error {
  using std::length_error::length_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed input text; `line` is 1-based.
struct ParseError : std::runtime_error {
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error(what), line(line) {}
  std::size_t line;
};

struct EmptyInputError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

}  // namespace pvt
