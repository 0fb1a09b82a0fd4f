#pragma once

#include <stdexcept>
#include <string>

namespace certgate {

// Base type for every error thrown by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller passed an argument outside its documented domain.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// A sample fell outside the declared bounded range. The statistical
// guarantees assume boundedness, so this is a contract breach rather
// than a recoverable condition.
class RangeViolation : public Error {
 public:
  using Error::Error;
};

// A test was requested with fewer samples than it can support.
class InsufficientSamples : public Error {
 public:
  using Error::Error;
};

// No spendable error probability remains for the requested event.
class BudgetExhausted : public Error {
 public:
  using Error::Error;
};

// An evaluation backend failed. The batch that triggered it is void.
class HarnessError : public Error {
 public:
  using Error::Error;
};

// An experiment description file is malformed or inconsistent.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A transcript cannot be parsed or does not match recomputation.
class ReplayError : public Error {
 public:
  using Error::Error;
};

}  // namespace certgate
