#pragma once

#include <stdexcept>
#include <string>

namespace interformer {

// Root of every error the library raises.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

// API misuse, e.g. calling backward on a non-scalar.
class ContractError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// All keys of some attention query are masked.
class DegenerateAttentionError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class SchemaError : public DataError {
 public:
  using DataError::DataError;
};

class IngestionError : public DataError {
 public:
  using DataError::DataError;
};

class ParseError : public DataError {
 public:
  ParseError(const std::string& what, std::size_t line)
      : DataError(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

// Parameters do not match what the model configuration expects.
class AssemblyError : public Error {
 public:
  using Error::Error;
};

class OptimizerError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

class CorruptionError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

class VersionError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

}  // namespace interformer
