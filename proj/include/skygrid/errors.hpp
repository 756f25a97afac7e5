#pragma once

#include <stdexcept>
#include <string>

namespace skygrid {

// The three failure families map onto distinct CLI exit codes.

/// Invalid or inconsistent run configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input data (trees, dates, covariates, traces).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numerical routine could not produce a finite, valid result.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace skygrid
