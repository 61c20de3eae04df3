#pragma once

#include <stdexcept>
#include <string>

namespace ftm {

// Error taxonomy mirrors the CLI exit codes: config -> 2, model/registry -> 3,
// evaluation -> 4. Anything else escapes as a plain std::runtime_error -> 1.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

class RegistryError : public std::runtime_error {
 public:
  explicit RegistryError(const std::string& msg) : std::runtime_error(msg) {}
};

class EvalError : public std::runtime_error {
 public:
  explicit EvalError(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad arguments to an operation (out-of-range label, shape mismatch, ...).
class InputError : public std::invalid_argument {
 public:
  explicit InputError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Numerical blow-up inside an attack loop; carries the iteration index.
class NonFiniteLossError : public std::runtime_error {
 public:
  NonFiniteLossError(int iteration, const std::string& msg)
      : std::runtime_error(msg), iteration(iteration) {}
  int iteration;
};

}  // namespace ftm
