#pragma once

#include <stdexcept>
#include <string>

namespace clld {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shapes disagree; the message names the offending axis.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration: divisibility rules, unknown keys, bad ranges.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A caller broke an API precondition (e.g. backward on a non-scalar).
class ContractError : public Error {
 public:
  using Error::Error;
};

// A function under evaluation produced a non-finite value.
class EvaluationError : public Error {
 public:
  using Error::Error;
};

// Training produced a non-finite loss.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Checkpoint / dataset / annotation input could not be read.
class LoadError : public Error {
 public:
  using Error::Error;
};

}  // namespace clld
