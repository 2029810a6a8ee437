#pragma once

#include <stdexcept>
#include <string>

namespace dqpp {

// Exit-code categories used by the CLI: usage = 1, data = 2, numeric = 3.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& msg) : Error(msg) {}
};

// Malformed external input. Carries "path:line:" context when known.
class ParseError : public Error {
 public:
  explicit ParseError(const std::string& msg) : Error(msg) {}
  ParseError(const std::string& path, std::size_t line, const std::string& msg)
      : Error(path + ":" + std::to_string(line) + ": " + msg) {}
};

// Structurally valid input that violates a contract (missing doc, shape
// mismatch, ...).
class DataError : public Error {
 public:
  explicit DataError(const std::string& msg) : Error(msg) {}
};

// A metric or correlation that has no defined value for the given input
// (no judged-relevant documents, zero variance, all-tied ranking).
class UndefinedMetricError : public DataError {
 public:
  explicit UndefinedMetricError(const std::string& msg) : DataError(msg) {}
};

// Non-finite values encountered during numeric computation.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& msg) : Error(msg) {}
};

}  // namespace dqpp
