#pragma once

#include <vector>

#include "stvnn/types.hpp"

namespace stvnn {

// Coefficients h[k][t'][g][f] of one spatiotemporal covariance filter bank:
// spatial order K (powers C^0..C^K), temporal memory T (lags 0..T-1),
// F_in input features and F_out output features.
//
// Stored as one tap matrix per lag, shape ((K+1)*F_in) x F_out, with row
// k*F_in + g. The tap layout lets a layer apply all (k, g) pairs of a lag as a
// single matrix product against the stacked shifted signal [Z, CZ, ..., C^K Z].
class FilterBank {
 public:
  FilterBank() = default;
  FilterBank(int order, int memory, int in_width, int out_width);

  int order() const { return order_; }
  int memory() const { return memory_; }
  int in_width() const { return in_width_; }
  int out_width() const { return out_width_; }
  std::size_t size() const;

  double& operator()(int k, int lag, int g, int f) { return taps_[lag](k * in_width_ + g, f); }
  double operator()(int k, int lag, int g, int f) const { return taps_[lag](k * in_width_ + g, f); }

  Matrix& tap(int lag) { return taps_[lag]; }
  const Matrix& tap(int lag) const { return taps_[lag]; }
  std::vector<Matrix>& taps() { return taps_; }
  const std::vector<Matrix>& taps() const { return taps_; }

  bool all_finite() const;
  bool same_shape(const FilterBank& other) const;

 private:
  int order_ = 0;
  int memory_ = 1;
  int in_width_ = 1;
  int out_width_ = 1;
  std::vector<Matrix> taps_;
};

// T frames of shape N x F, frames[0] is the newest (lag 0).
struct SignalWindow {
  std::vector<Matrix> frames;

  int length() const { return static_cast<int>(frames.size()); }
};

// [Z, C Z, C^2 Z, ..., C^K Z] concatenated column-wise, by repeated application.
Matrix shift_stack(const Matrix& cov, const Matrix& signal, int order);

// Output N x F_out:  sum_{t'} sum_k sum_g h[k][t'][g][f] C^k window[t'][:, g].
Matrix stvf_apply(const Matrix& cov, const FilterBank& bank, const SignalWindow& window);

// Polynomial gains h_{t'}(lambda_i) per (lag, eigenvalue, g, f).
class FrequencyResponse {
 public:
  FrequencyResponse(int memory, int points, int in_width, int out_width);
  double& operator()(int lag, int i, int g, int f) { return values_[index(lag, i, g, f)]; }
  double operator()(int lag, int i, int g, int f) const { return values_[index(lag, i, g, f)]; }
  int memory() const { return memory_; }
  int points() const { return points_; }

 private:
  std::size_t index(int lag, int i, int g, int f) const {
    return ((static_cast<std::size_t>(lag) * points_ + i) * in_width_ + g) * out_width_ + f;
  }
  int memory_, points_, in_width_, out_width_;
  std::vector<double> values_;
};

FrequencyResponse frequency_response(const FilterBank& bank, const Vector& eigenvalues);

// Largest |d/d lambda h_{t'}(lambda)| over all (t', g, f) on a uniform grid of
// `grid_points` points spanning [lo, hi].
double estimate_lipschitz(const FilterBank& bank, double lo, double hi, int grid_points = 1024);

}  // namespace stvnn
