#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "stvnn/types.hpp"

namespace stvnn {

struct TailProfile {
  int n_vars = 20;
  double tail_strength = 0.5;
  int effective_rank = 0;  // 0 -> max(1, N/4)
  std::uint64_t seed = 0;

  int rank() const { return effective_rank > 0 ? effective_rank : std::max(1, n_vars / 4); }
};

// s_i = (1 - tail) exp(-(i/R)^2) + tail exp(-0.1 i/R), i = 0..N-1.
Vector tail_singular_values(const TailProfile& profile);

// U diag(s) U^T with U a seeded random orthogonal matrix.
Matrix make_covariance(const TailProfile& profile);

// h_t = e^{-t} / sqrt(sum_s e^{-s}), t = 0..tau.
Vector ma_coefficients(int tau);

// Lag-`lag` autocovariance of the moving-average stream: sum_t h_t h_{t+lag} C.
Matrix ma_autocovariance(const Matrix& cov, int tau, int lag);

// x_t = sum_{t'} h_{t'} z_{t-t'}, z ~ N(0, C); tau burn-in draws precede x_0.
Series gen_stationary(const Matrix& cov, int samples, int tau, std::uint64_t seed);

struct ShiftSegment {
  int length = 1000;
  double alpha = 0.1;
};

struct ShiftSchedule {
  int train_length = 4000;
  double train_alpha = 0.5;
  std::vector<ShiftSegment> segments;
  double init_tail = 0.1;  // tail strength of the x_0 covariance

  static ShiftSchedule standard();
  int test_length() const;
};

struct ShiftData {
  Series train;
  Series test;
  std::vector<int> change_points;  // test-relative indices where a segment starts
};

// x_t = alpha_t x_{t-1} + eps, eps ~ N(0, I); x_0 ~ N(0, C).
ShiftData gen_nonstationary(const ShiftSchedule& schedule, int n, std::uint64_t seed);

// Independent per-trial seeds from a base seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

// Rows of N(0, cov) draws.
Series gaussian_samples(const Matrix& cov, int samples, std::mt19937_64& rng);

// Tail-profile covariance plus moving-average stream, both derived from one seed.
Series synthetic_stationary(int n, int samples, double tail, int tau, std::uint64_t seed);

}  // namespace stvnn
