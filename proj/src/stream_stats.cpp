#include "stvnn/stream_stats.hpp"

#include <cmath>
#include <string>

namespace stvnn {

namespace {

void check_mode(const UpdateMode& mode) {
  if (const auto* ns = std::get_if<Nonstationary>(&mode)) {
    if (!(ns->gamma >= 0.0 && ns->gamma <= 1.0))
      throw PreconditionError("covariance update: gamma must lie in [0, 1]");
  }
}

}  // namespace

CovarianceState init_from_batch(const Series& samples, UpdateMode mode) {
  check_mode(mode);
  if (samples.rows() < 2) throw InputError("init_from_batch: need at least 2 samples");
  if (samples.cols() < 1) throw InputError("init_from_batch: samples have zero dimension");
  if (!samples.allFinite()) throw InputError("init_from_batch: non-finite sample");

  const double m = static_cast<double>(samples.rows());
  CovarianceState s;
  s.mean = samples.colwise().mean().transpose();
  const Matrix centered = samples.rowwise() - s.mean.transpose();
  s.cov = (centered.transpose() * centered) / m;
  // Symmetrize exactly; the product above can differ in the last ulp.
  s.cov = 0.5 * (s.cov + s.cov.transpose()).eval();
  s.count = static_cast<std::uint64_t>(samples.rows());
  s.mode = mode;
  return s;
}

CovarianceState init_from_sample(const Vector& x, UpdateMode mode) {
  check_mode(mode);
  if (!x.allFinite()) throw InputError("init_from_sample: non-finite sample");
  CovarianceState s;
  s.mean = x;
  s.cov = Matrix::Zero(x.size(), x.size());
  s.count = 1;
  s.mode = mode;
  return s;
}

void update_in_place(CovarianceState& state, const Vector& x) {
  if (x.size() != state.mean.size()) throw PreconditionError("covariance update: dimension mismatch");
  if (!x.allFinite()) throw InputError("covariance update: non-finite sample");

  double alpha, beta, xi, zeta;
  if (const auto* ns = std::get_if<Nonstationary>(&state.mode)) {
    alpha = xi = 1.0 - ns->gamma;
    beta = zeta = ns->gamma;
  } else {
    if (state.count < 1) throw PreconditionError("stationary covariance update requires count >= 1");
    const double t = static_cast<double>(state.count);
    alpha = t / (t + 1.0);
    beta = zeta = 1.0 / (t + 1.0);
    xi = (t - 1.0) / t;
  }

  const Vector d = x - state.mean;
  state.mean = alpha * state.mean + beta * x;
  state.cov = xi * state.cov + zeta * (d * d.transpose());
  // vectorized and scalar paths round differently; mirror so cov stays exactly symmetric
  for (Eigen::Index j = 0; j < state.cov.cols(); ++j)
    for (Eigen::Index i = j + 1; i < state.cov.rows(); ++i) state.cov(i, j) = state.cov(j, i);
  state.count += 1;
}

CovarianceState update(const CovarianceState& state, const Vector& x) {
  CovarianceState next = state;
  update_in_place(next, x);
  return next;
}

Matrix trace_normalize(const Matrix& cov) {
  if (cov.rows() != cov.cols()) throw PreconditionError("trace_normalize: matrix is not square");
  const double tr = cov.trace();
  if (!(tr > 1e-15)) throw DegenerateCovarianceError("trace_normalize: trace is (near) zero");
  return cov / tr;
}

}  // namespace stvnn
