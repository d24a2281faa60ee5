#pragma once

#include <stdexcept>
#include <string>

namespace stratdef {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input file (carries file/line context in the message).
class ParseError : public Error {
 public:
  using Error::Error;
};

// Index or value outside a declared range.
class BoundsError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration or unsatisfiable request.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// An API precondition was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Training could not proceed (e.g. single-class data).
class TrainError : public Error {
 public:
  using Error::Error;
};

// Prediction-engine state violation (e.g. drawing an unloaded model).
class EngineError : public Error {
 public:
  using Error::Error;
};

// Optimization failed in a way that indicates a bug.
class SolverError : public Error {
 public:
  using Error::Error;
};

}  // namespace stratdef
