#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace txsentry {

// Bad input data: malformed files, schema violations, unparsable fields.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public DataError {
 public:
  ParseError(const std::string& what, std::size_t byte_offset)
      : DataError(what), byte_offset_(byte_offset) {}
  std::size_t byte_offset() const noexcept { return byte_offset_; }

 private:
  std::size_t byte_offset_;
};

class SchemaError : public DataError {
 public:
  using DataError::DataError;
};

// A single field of a single record could not be decoded.
class FieldError : public DataError {
 public:
  FieldError(std::size_t record, std::string field, const std::string& detail)
      : DataError("record " + std::to_string(record) + ", field '" + field +
                  "': " + detail),
        record_(record),
        field_(std::move(field)) {}
  std::size_t record() const noexcept { return record_; }
  const std::string& field() const noexcept { return field_; }

 private:
  std::size_t record_;
  std::string field_;
};

class RowError : public DataError {
 public:
  RowError(std::size_t line, const std::string& detail)
      : DataError("line " + std::to_string(line) + ": " + detail), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Non-finite values, failed factorizations, diverging optimizers.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A model could not be estimated from the given data (e.g. singular regression).
class FitError : public NumericError {
 public:
  using NumericError::NumericError;
};

}  // namespace txsentry
