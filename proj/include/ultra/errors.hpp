#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ultra {

// Base of every recoverable error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input data problems: malformed files, unknown names, missing files.
class DataError : public Error {
 public:
  using Error::Error;
};

class IoError : public DataError {
 public:
  using DataError::DataError;
};

class ParseError : public DataError {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : DataError(source + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class VocabularyError : public DataError {
 public:
  using DataError::DataError;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Tensor shape mismatch; the message names the offending op.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf produced by a forward op or a loss.
class NumericError : public Error {
 public:
  using Error::Error;
};

class SamplingError : public Error {
 public:
  using Error::Error;
};

// Out-of-range entity/relation index supplied by the caller.
class IndexError : public Error {
 public:
  using Error::Error;
};

// Non-finite loss during training. Carries the path of the last good
// checkpoint when one was written.
class TrainingDivergence : public NumericError {
 public:
  TrainingDivergence(const std::string& what, std::string last_good)
      : NumericError(what), last_good_path_(std::move(last_good)) {}
  const std::string& last_good_path() const { return last_good_path_; }

 private:
  std::string last_good_path_;
};

// Broken caller precondition (programming error rather than bad data).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace ultra
