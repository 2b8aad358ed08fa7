#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace fairgrain {

// Error taxonomy. Every throwing operation in the library uses one of these
// so callers (and the CLI) can distinguish bad configuration from bad data
// from bad runtime state.

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ValidationError : std::runtime_error {
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

struct StateError : std::runtime_error {
  explicit StateError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

struct TrainingError : std::runtime_error {
  explicit TrainingError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IncompatibilityError : std::runtime_error {
  explicit IncompatibilityError(const std::string& msg) : std::runtime_error(msg) {}
};

using Rng = std::mt19937_64;

// Uniform integer in [0, k). Modulo reduction on a 64-bit generator; the
// residual bias is far below anything our statistical tests can see.
inline int uniform_index(Rng& rng, int k) {
  return static_cast<int>(rng() % static_cast<std::uint64_t>(k));
}

}  // namespace fairgrain
