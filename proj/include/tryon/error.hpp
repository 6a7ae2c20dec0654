#pragma once

#include <stdexcept>
#include <string>

namespace tryon {

/// Malformed or inconsistent caller input (dimension mismatch, bad file, ...).
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid or incomplete configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A perception backend is unavailable or failed. Distinct from "nothing detected",
/// which backends report as an empty optional.
class BackendError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace tryon
