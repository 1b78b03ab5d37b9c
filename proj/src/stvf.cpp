#include "stvnn/stvf.hpp"

#include <algorithm>
#include <cmath>

namespace stvnn {

FilterBank::FilterBank(int order, int memory, int in_width, int out_width)
    : order_(order), memory_(memory), in_width_(in_width), out_width_(out_width) {
  if (order < 0 || memory < 1 || in_width < 1 || out_width < 1)
    throw PreconditionError("FilterBank: need K >= 0, T >= 1, F_in >= 1, F_out >= 1");
  taps_.assign(memory, Matrix::Zero((order + 1) * in_width, out_width));
}

std::size_t FilterBank::size() const {
  return static_cast<std::size_t>(order_ + 1) * memory_ * in_width_ * out_width_;
}

bool FilterBank::all_finite() const {
  return std::all_of(taps_.begin(), taps_.end(), [](const Matrix& m) { return m.allFinite(); });
}

bool FilterBank::same_shape(const FilterBank& other) const {
  return order_ == other.order_ && memory_ == other.memory_ && in_width_ == other.in_width_ &&
         out_width_ == other.out_width_;
}

Matrix shift_stack(const Matrix& cov, const Matrix& signal, int order) {
  const Eigen::Index n = signal.rows();
  const Eigen::Index f = signal.cols();
  Matrix out(n, (order + 1) * f);
  out.leftCols(f) = signal;
  for (int k = 1; k <= order; ++k) out.middleCols(k * f, f).noalias() = cov * out.middleCols((k - 1) * f, f);
  return out;
}

Matrix stvf_apply(const Matrix& cov, const FilterBank& bank, const SignalWindow& window) {
  if (cov.rows() != cov.cols()) throw PreconditionError("stvf_apply: covariance is not square");
  if (!cov.allFinite()) throw InputError("stvf_apply: non-finite covariance");
  if (window.length() != bank.memory()) throw PreconditionError("stvf_apply: window length != temporal memory");
  Matrix out = Matrix::Zero(cov.rows(), bank.out_width());
  for (int lag = 0; lag < bank.memory(); ++lag) {
    const Matrix& frame = window.frames[lag];
    if (frame.rows() != cov.rows() || frame.cols() != bank.in_width())
      throw PreconditionError("stvf_apply: frame shape does not match covariance/bank");
    out.noalias() += shift_stack(cov, frame, bank.order()) * bank.tap(lag);
  }
  return out;
}

FrequencyResponse::FrequencyResponse(int memory, int points, int in_width, int out_width)
    : memory_(memory), points_(points), in_width_(in_width), out_width_(out_width),
      values_(static_cast<std::size_t>(memory) * points * in_width * out_width, 0.0) {}

FrequencyResponse frequency_response(const FilterBank& bank, const Vector& eigenvalues) {
  if (!eigenvalues.allFinite()) throw InputError("frequency_response: non-finite eigenvalues");
  const int npts = static_cast<int>(eigenvalues.size());
  FrequencyResponse out(bank.memory(), npts, bank.in_width(), bank.out_width());
  for (int lag = 0; lag < bank.memory(); ++lag)
    for (int i = 0; i < npts; ++i)
      for (int g = 0; g < bank.in_width(); ++g)
        for (int f = 0; f < bank.out_width(); ++f) {
          // Horner: (((h_K) lambda + h_{K-1}) lambda + ...) + h_0
          double acc = 0.0;
          for (int k = bank.order(); k >= 0; --k) acc = acc * eigenvalues[i] + bank(k, lag, g, f);
          out(lag, i, g, f) = acc;
        }
  return out;
}

double estimate_lipschitz(const FilterBank& bank, double lo, double hi, int grid_points) {
  if (!(hi > lo) || !std::isfinite(lo) || !std::isfinite(hi))
    throw PreconditionError("estimate_lipschitz: empty or invalid interval");
  if (grid_points < 2) throw PreconditionError("estimate_lipschitz: need at least 2 grid points");
  double best = 0.0;
  for (int p = 0; p < grid_points; ++p) {
    const double lambda = lo + (hi - lo) * static_cast<double>(p) / (grid_points - 1);
    for (int lag = 0; lag < bank.memory(); ++lag)
      for (int g = 0; g < bank.in_width(); ++g)
        for (int f = 0; f < bank.out_width(); ++f) {
          // d/dlambda sum_k h_k lambda^k = sum_{k>=1} k h_k lambda^{k-1}, via Horner.
          double acc = 0.0;
          for (int k = bank.order(); k >= 1; --k) acc = acc * lambda + k * bank(k, lag, g, f);
          best = std::max(best, std::abs(acc));
        }
  }
  return best;
}

}  // namespace stvnn
