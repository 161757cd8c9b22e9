#pragma once

#include <stdexcept>
#include <string>

namespace seedling {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shapes, sizes or hyperparameters that cannot work together.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf encountered where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Malformed, oversized or out-of-order wire traffic.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

// No parameter snapshot has been published yet.
class NotReadyError : public Error {
 public:
  using Error::Error;
};

}  // namespace seedling
