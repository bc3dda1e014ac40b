#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>

namespace posoc {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Selects between the OpenMP kernels and their serial reference versions.
/// Both produce bit-identical results for the same inputs.
enum class Execution { serial, parallel };

// Error hierarchy. Each family maps onto one CLI exit code (see tools/).

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid problem definition, dimension mismatch, bad scenario file.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the domain of an operation (e.g. beta <= 0).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Non-finite state produced while integrating the SDE.
class PropagationError : public Error {
 public:
  PropagationError(const std::string& what, std::size_t trajectory)
      : Error(what + " (trajectory " + std::to_string(trajectory) + ")"),
        trajectory_(trajectory) {}
  std::size_t trajectory() const { return trajectory_; }

 private:
  std::size_t trajectory_;
};

/// Bayes update with vanishing predictive likelihood.
class DegeneracyError : public Error {
 public:
  using Error::Error;
};

class LinearAlgebraError : public Error {
 public:
  using Error::Error;
};

/// Regression failure (e.g. a time node without samples).
class FitError : public Error {
 public:
  using Error::Error;
};

/// Policy evaluation failed inside a rollout.
class RolloutError : public Error {
 public:
  using Error::Error;
};

/// Exhaustive enumeration would exceed its budget.
class SizeError : public Error {
 public:
  using Error::Error;
};

/// A hard numerical invariant was violated.
class InvariantError : public Error {
 public:
  using Error::Error;
};

}  // namespace posoc
