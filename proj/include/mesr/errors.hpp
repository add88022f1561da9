#pragma once

#include <stdexcept>
#include <string>

namespace mesr {

// Each category maps onto one CLI exit code (see commands.hpp).

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mesr
