#pragma once

#include <stdexcept>
#include <string>

namespace fastkci {

/// Base class for all library errors.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct AllSamplesIdentical : Error {
  using Error::Error;
};

struct AlreadyCentered : Error {
  using Error::Error;
};

struct SolveFailed : Error {
  using Error::Error;
};

struct DimensionMismatch : Error {
  using Error::Error;
};

struct EigFailed : Error {
  using Error::Error;
};

struct NotPositiveSemiDefinite : Error {
  using Error::Error;
};

struct RowCountMismatch : Error {
  using Error::Error;
};

struct TooFewSamples : Error {
  using Error::Error;
};

struct CholeskyFailed : Error {
  using Error::Error;
};

struct NonFiniteLogWeight : Error {
  using Error::Error;
};

struct NodeCountMismatch : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct FileNotFound : Error {
  using Error::Error;
};

/// CSV parse failure; `row` is the 1-based data row (header excluded).
struct ParseError : Error {
  ParseError(const std::string& msg, long row_in, std::string column_in)
      : Error(msg), row(row_in), column(std::move(column_in)) {}
  long row = 0;
  std::string column;
};

struct ColumnSpecError : Error {
  using Error::Error;
};

}  // namespace fastkci
