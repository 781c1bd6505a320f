#pragma once

#include <stdexcept>
#include <string>

namespace thermo {

/// Bad input: malformed config, inadmissible symbol, invalid model.
class ValidationError : public std::invalid_argument {
 public:
  explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

/// A computation could not finish: no bracket, divergence, non-convergence.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace thermo
