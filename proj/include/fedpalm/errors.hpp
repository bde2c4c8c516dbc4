#pragma once

#include <stdexcept>
#include <string>

namespace fedpalm {

// Error taxonomy used across the library. CLI maps ConfigError to exit
// code 2 and everything else to 3.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DimensionError : Error {
  using Error::Error;
};

struct NumericError : Error {
  using Error::Error;
};

struct DegenerateInputError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct ProtocolError : Error {
  using Error::Error;
};

struct LabelError : Error {
  using Error::Error;
};

struct BatchError : Error {
  using Error::Error;
};

struct DatasetError : Error {
  using Error::Error;
};

struct ParseError : Error {
  using Error::Error;
};

struct MetricError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

struct EvaluationError : Error {
  using Error::Error;
};

struct DeploymentError : Error {
  using Error::Error;
};

}  // namespace fedpalm
