#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace mfl {

/// Dense model parameters, the vector x in R^d.
using ModelVector = std::vector<double>;

/// Invalid configuration or mismatched inputs (dimensions, weights, files).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input text. Carries the 1-based line number when known.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  explicit ParseError(const std::string& what) : std::runtime_error(what), line_(0) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// A computation produced a non-finite value.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mfl
