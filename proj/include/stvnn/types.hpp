#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace stvnn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Multivariate time series: one row per time step, one column per variable.
using Series = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller violated a documented precondition (shapes, symmetry, ranges).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

// Input data is unusable (non-finite values, too few samples, malformed files).
class InputError : public Error {
 public:
  using Error::Error;
};

class DegenerateCovarianceError : public Error {
 public:
  using Error::Error;
};

// Non-finite intermediate state (exploding covariance powers, diverging updates).
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Checkpoint or data container failed its integrity checks.
class CorruptionError : public Error {
 public:
  using Error::Error;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw PreconditionError(what);
}

}  // namespace stvnn
