#pragma once

#include <stdexcept>
#include <string>

namespace ctxcal {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// calibration_core
class AllZeroMass : public Error {
 public:
  using Error::Error;
};
class ZeroEntry : public Error {
 public:
  using Error::Error;
};
class DimensionMismatch : public Error {
 public:
  using Error::Error;
};
class InvalidDistribution : public Error {
 public:
  using Error::Error;
};

// prompt_engine
class TemplateError : public Error {
 public:
  using Error::Error;
};
class CapExceeded : public Error {
 public:
  using Error::Error;
};
class InsufficientPool : public Error {
 public:
  using Error::Error;
};
class InvalidLabel : public Error {
 public:
  using Error::Error;
};

// lm_backend
class BackendUnavailable : public Error {
 public:
  using Error::Error;
};
class TokenNotInTopK : public Error {
 public:
  using Error::Error;
};
class LabelTokenCollision : public Error {
 public:
  using Error::Error;
};

// diagnostics
class MissingFrequency : public Error {
 public:
  using Error::Error;
};
class DegenerateInput : public Error {
 public:
  using Error::Error;
};

// eval_harness
class BudgetExceeded : public Error {
 public:
  using Error::Error;
};
class DatasetError : public Error {
 public:
  using Error::Error;
};

/// Bad configuration or arguments supplied by the operator.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace ctxcal
