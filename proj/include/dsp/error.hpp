#pragma once

#include <stdexcept>
#include <string>

namespace dsp {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// bad user input (config keys, world files, flags)
class ConfigError : public Error {
 public:
  using Error::Error;
};

// malformed or inconsistent data files
class DataError : public Error {
 public:
  using Error::Error;
};

class InfeasibleError : public Error {
 public:
  using Error::Error;
};

class NonMonotoneTimestamp : public DataError {
 public:
  using DataError::DataError;
};

}  // namespace dsp
