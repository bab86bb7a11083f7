/*!
 *  Copyright (c) 2026 by Contributors
 * \file gadkit/errors.hpp
 * \brief Exception types shared by all gadkit modules. The CLI maps each
 *  family onto a fixed process exit code.
 */
#pragma once

#include <cstddef>
#include <cstdio>
#include <stdexcept>
#include <string>

namespace gadkit {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad user input: flags, config combinations, malformed grammar text.
class UsageError : public Error {
 public:
  using Error::Error;
};

class GrammarError : public UsageError {
 public:
  GrammarError(const std::string& what, std::size_t line, std::size_t column)
      : UsageError(Format(what, line, column)), line_(line), column_(column) {}
  explicit GrammarError(const std::string& what) : UsageError(what) {}

  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

 private:
  static std::string Format(const std::string& what, std::size_t line, std::size_t column) {
    return "grammar:" + std::to_string(line) + ":" + std::to_string(column) + ": " + what;
  }
  std::size_t line_ = 0;
  std::size_t column_ = 0;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// A file that exists but cannot be decoded (truncated JSON, wrong version).
class CorruptFileError : public IoError {
 public:
  using IoError::IoError;
};

/// Model backend failure: transport, malformed response, bad vector.
class ModelError : public Error {
 public:
  using Error::Error;
};

/// A decoding budget ran out: max_len reached without an admissible EOS, or
/// the rejection sampler spent its attempt budget.
class BudgetError : public Error {
 public:
  using Error::Error;
};

/// The exact oracle found more than the tolerated probability mass beyond
/// its length bound.
class TailMassError : public UsageError {
 public:
  TailMassError(double residual, double tolerance)
      : UsageError(Format(residual, tolerance)), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  static std::string Format(double residual, double tolerance) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "tail mass %.6g beyond the length bound exceeds tolerance %.3g", residual,
                  tolerance);
    return buf;
  }
  double residual_;
};

/// Internal consistency violation (a bug or a broken precondition).
class InvariantError : public Error {
 public:
  using Error::Error;
};

}  // namespace gadkit
