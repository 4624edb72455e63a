#pragma once

#include <stdexcept>

namespace arcscore {

// Invalid configuration or argument (bad archetype, O >= W, zero injection ratio, ...).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Operand shapes disagree.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed serialized data: token files, delayed grids, weight containers.
class DecodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Missing inputs at runtime: empty corpus, missing weights, empty directories.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace arcscore
