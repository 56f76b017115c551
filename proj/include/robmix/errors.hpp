#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace robmix {

/// Argument outside the mathematical domain of a function (e.g. sigma2 <= 0).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Caller-supplied parameter violates a documented precondition.
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Design matrix (or every candidate subset of it) is numerically rank deficient.
class DegenerateDesignError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A mixture component fell below the minimum size needed by its M-step.
class UndersizedComponentError : public std::runtime_error {
 public:
  UndersizedComponentError(int component, long size, long required)
      : std::runtime_error("component " + std::to_string(component + 1) + " has " +
                           std::to_string(size) + " members, needs " +
                           std::to_string(required)),
        component_(component) {}
  int component() const noexcept { return component_; }

 private:
  int component_;
};

/// No random start of a mixture fit completed.
class FitFailure : public std::runtime_error {
 public:
  FitFailure(const std::string& what, std::vector<std::string> diagnostics)
      : std::runtime_error(what), diagnostics_(std::move(diagnostics)) {}
  const std::vector<std::string>& diagnostics() const noexcept { return diagnostics_; }

 private:
  std::vector<std::string> diagnostics_;
};

/// Every repetition of a benchmark failed.
class BenchmarkFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file; message names the offending line.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, long line)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  long line() const noexcept { return line_; }

 private:
  long line_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace robmix
