#pragma once

#include <stdexcept>
#include <string>

namespace freqcert {

// Error categories surfaced by the command-line tool as distinct exit codes.

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct IncompleteDatasetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct UnsupportedDimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

}  // namespace freqcert
