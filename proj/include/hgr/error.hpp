#pragma once

#include <stdexcept>
#include <string>

namespace hgr {

// Base for every error raised by the library. The CLI maps these to exit 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad ids, arities, dataset contents.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Tensor dimension disagreement.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Invalid hyperparameters or model configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Caller broke a documented precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

// NaN or Inf produced by a forward op or the loss.
class NumericError : public Error {
 public:
  using Error::Error;
};

class UnsupportedError : public Error {
 public:
  using Error::Error;
};

}  // namespace hgr
