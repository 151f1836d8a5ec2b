#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace gpvs {

// Validation failures (bad shapes, out-of-range parameters, bad input files)
// map to exit code 1 in the CLI; numerical failures map to exit code 2.

class InvalidArgument : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Indicator vector and parameter state disagree.
class InvalidState : public std::logic_error {
public:
  using std::logic_error::logic_error;
};

class TransformError : public std::domain_error {
public:
  using std::domain_error::domain_error;
};

class ParseError : public std::runtime_error {
public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : std::runtime_error(source + ":" + std::to_string(line) + ": " + what),
        source_(source), line_(line) {}

  const std::string& source() const noexcept { return source_; }
  std::size_t line() const noexcept { return line_; }

private:
  std::string source_;
  std::size_t line_;
};

class EmptyEnsemble : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Factorization of a correlation system failed at every jitter level tried.
class NumericalSingularity : public std::runtime_error {
public:
  NumericalSingularity(const std::string& what, std::vector<double> jitters)
      : std::runtime_error(what), jitters_(std::move(jitters)) {}

  const std::vector<double>& attempted_jitters() const noexcept { return jitters_; }

private:
  std::vector<double> jitters_;
};

class OptimizationFailure : public std::runtime_error {
public:
  OptimizationFailure(const std::string& what, std::vector<std::vector<double>> trace)
      : std::runtime_error(what), trace_(std::move(trace)) {}

  /// Points (in search coordinates) at which the objective was evaluated.
  const std::vector<std::vector<double>>& trace() const noexcept { return trace_; }

private:
  std::vector<std::vector<double>> trace_;
};

} // namespace gpvs
