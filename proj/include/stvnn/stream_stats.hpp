#pragma once

#include <cstdint>
#include <variant>

#include "stvnn/types.hpp"

namespace stvnn {

// Running-average coefficients: alpha = t/(t+1), beta = zeta = 1/(t+1), xi = (t-1)/t.
struct Stationary {
  bool operator==(const Stationary&) const = default;
};

// Exponential forgetting: alpha = xi = 1 - gamma, beta = zeta = gamma.
struct Nonstationary {
  double gamma = 0.1;
  bool operator==(const Nonstationary&) const = default;
};

using UpdateMode = std::variant<Stationary, Nonstationary>;

struct CovarianceState {
  Vector mean;
  Matrix cov;
  std::uint64_t count = 0;
  UpdateMode mode = Stationary{};

  Eigen::Index dim() const { return mean.size(); }
};

// Warm start from a block of samples (rows): sample mean and the 1/M covariance.
CovarianceState init_from_batch(const Series& samples, UpdateMode mode = Stationary{});

// First streamed sample: mean = x, cov = 0, count = 1.
CovarianceState init_from_sample(const Vector& x, UpdateMode mode = Stationary{});

// One step of the recursive mean/covariance update. The outer product uses the
// pre-update mean.
CovarianceState update(const CovarianceState& state, const Vector& x);
void update_in_place(CovarianceState& state, const Vector& x);

Matrix trace_normalize(const Matrix& cov);

}  // namespace stvnn
