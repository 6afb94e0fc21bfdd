#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace p2c {

/// Base class for every error the engine raises.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed rule text. Carries a 1-based source position.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, std::size_t column, const std::string& what)
      : Error(std::to_string(line) + ":" + std::to_string(column) + ": " + what),
        line_(line),
        column_(column),
        message_(what) {}

  /// The same error reported against a named source.
  ParseError in_file(const std::string& file) const { return ParseError(line_, column_, message_, file); }

  const std::string& message() const noexcept { return message_; }

  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
  std::string message_;

  ParseError(std::size_t line, std::size_t column, const std::string& what, const std::string& file)
      : Error(file + ":" + std::to_string(line) + ":" + std::to_string(column) + ": " + what),
        line_(line),
        column_(column),
        message_(what) {}
};

/// Bad configuration, unknown feature/value, out-of-range input, broken
/// cross references between a config and its rule programs.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Two alternatives of a causal group fire on the same state, or repair
/// does not converge on a cyclic program.
class InconsistentCausalProgram : public Error {
 public:
  using Error::Error;
};

/// The goal set is empty under the active plausibility constraints.
class NoCounterfactual : public Error {
 public:
  using Error::Error;
};

/// A precondition on the initial state failed (not causally consistent,
/// already a counterfactual, not decision-positive).
class InvalidInitialState : public Error {
 public:
  using Error::Error;
};

}  // namespace p2c
