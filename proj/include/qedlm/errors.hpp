#pragma once

#include <stdexcept>
#include <string>

namespace qedlm {

// Base of every error the library throws. The CLI maps the subclasses onto
// exit codes (config 2, I/O 3, numeric 4).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class ContractError : public Error {
 public:
  using Error::Error;
};

class DoubleBackwardError : public ContractError {
 public:
  using ContractError::ContractError;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class SpecError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class ScheduleError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class VocabularyError : public Error {
 public:
  using Error::Error;
};

class DegenerateLabelError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class GuidanceError : public Error {
 public:
  using Error::Error;
};

// Non-finite loss or gradient during training.
class NumericError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class FormatError : public IoError {
 public:
  using IoError::IoError;
};

}  // namespace qedlm
