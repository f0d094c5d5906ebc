#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace chi2sets {

// Bad arguments, malformed files, violated preconditions.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Numerical failures: singular matrices, degenerate residuals, non-convergence.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SingularMatrix : public NumericalError {
 public:
  SingularMatrix(const std::string& what, double condition)
      : NumericalError(what), condition_(condition) {}
  // ratio smallest/largest eigenvalue at the point of failure
  double condition() const { return condition_; }

 private:
  double condition_;
};

class DegenerateFit : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class NonConvergence : public NumericalError {
 public:
  NonConvergence(const std::string& what, Eigen::MatrixXd last_iterate, int iterations)
      : NumericalError(what), last_(std::move(last_iterate)), iterations_(iterations) {}
  const Eigen::MatrixXd& last_iterate() const { return last_; }
  int iterations() const { return iterations_; }

 private:
  Eigen::MatrixXd last_;
  int iterations_;
};

// An identity that must hold by algebra did not; points at a solver or KKT bug.
class ConsistencyError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace chi2sets
