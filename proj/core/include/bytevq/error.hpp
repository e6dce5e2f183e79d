#pragma once

#include <stdexcept>
#include <string>

namespace bytevq {

// Bad flag combinations, infeasible task specs. CLI exit code 1.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed or inconsistent inputs: out-of-range symbols, dimension
// mismatches, unparseable or truncated files. CLI exit code 2.
struct InputError : std::runtime_error {
  explicit InputError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// NaN/Inf in losses or gradients, non-deterministic loss functions.
// CLI exit code 3.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace bytevq
