// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace easwin {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shape or extent mismatch between operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A precondition of an operation was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration (model, training, data or run config).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A forward value became NaN or infinite.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Metric is undefined for the given input (e.g. AUC on one class).
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

/// Malformed or unreadable data file.
class DataError : public Error {
 public:
  using Error::Error;
};

class BadMagicError : public DataError {
 public:
  using DataError::DataError;
};

class BadVersionError : public DataError {
 public:
  using DataError::DataError;
};

class CrcMismatchError : public DataError {
 public:
  CrcMismatchError(const std::string& what, std::uint64_t offset)
      : DataError(what), offset_(offset) {}
  /// Byte offset of the stored checksum that failed to verify.
  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_;
};

class TruncatedError : public DataError {
 public:
  using DataError::DataError;
};

}  // namespace easwin
