#pragma once

#include <stdexcept>
#include <string>

namespace changeplane {

/// Malformed or inconsistent run configuration (CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input data that cannot be bound to a Dataset (CLI exit code 3).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Factorization, eigen-solve or sampler failure (CLI exit code 4).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace changeplane
