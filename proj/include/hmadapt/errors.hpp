#pragma once

#include <stdexcept>
#include <string>

namespace hmadapt {

// Error taxonomy mirrors the CLI exit codes: config -> 2, data -> 3, I/O -> 4.
// Shape/contract violations inside the library use std::invalid_argument or
// std::logic_error and are treated as bugs, not user errors.

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace hmadapt
