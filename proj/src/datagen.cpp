#include "stvnn/datagen.hpp"

#include <cmath>

namespace stvnn {

Vector tail_singular_values(const TailProfile& profile) {
  require(profile.n_vars >= 1, "tail profile: n_vars must be >= 1");
  require(profile.tail_strength >= 0.0 && profile.tail_strength <= 1.0, "tail profile: tail must lie in [0, 1]");
  require(profile.effective_rank >= 0, "tail profile: effective_rank must be >= 1");
  const double r = profile.rank();
  const double tail = profile.tail_strength;
  Vector s(profile.n_vars);
  for (int i = 0; i < profile.n_vars; ++i) {
    const double u = i / r;
    s(i) = (1.0 - tail) * std::exp(-u * u) + tail * std::exp(-0.1 * u);
  }
  return s;
}

namespace {

Matrix gaussian_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
  return m;
}

// Orthogonal factor of a Gaussian matrix; signs fixed so R has a positive diagonal.
Matrix random_orthogonal(int n, std::mt19937_64& rng) {
  const Matrix g = gaussian_matrix(n, n, rng);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(n, n);
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int j = 0; j < n; ++j)
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  return q;
}

}  // namespace

Matrix make_covariance(const TailProfile& profile) {
  const Vector s = tail_singular_values(profile);
  std::mt19937_64 rng(profile.seed);
  const Matrix u = random_orthogonal(profile.n_vars, rng);
  Matrix c = u * s.asDiagonal() * u.transpose();
  return 0.5 * (c + c.transpose());
}

Vector ma_coefficients(int tau) {
  require(tau >= 0, "ma_coefficients: tau must be >= 0");
  Vector h(tau + 1);
  for (int t = 0; t <= tau; ++t) h(t) = std::exp(-static_cast<double>(t));
  return h / std::sqrt(h.sum());
}

Matrix ma_autocovariance(const Matrix& cov, int tau, int lag) {
  require(lag >= 0, "ma_autocovariance: lag must be >= 0");
  const Vector h = ma_coefficients(tau);
  double w = 0.0;
  for (int t = 0; t + lag <= tau; ++t) w += h(t) * h(t + lag);
  return w * cov;
}

Series gaussian_samples(const Matrix& cov, int samples, std::mt19937_64& rng) {
  require(cov.rows() == cov.cols(), "gaussian_samples: covariance must be square");
  Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
  if (es.info() != Eigen::Success) throw InputError("gaussian_samples: eigensolver failed");
  if (es.eigenvalues().minCoeff() < -1e-9 * std::max(1.0, es.eigenvalues().maxCoeff()))
    throw InputError("gaussian_samples: covariance is not positive semidefinite");
  const Matrix factor = es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
  const Matrix z = gaussian_matrix(cov.rows(), samples, rng);
  return Series((factor * z).transpose());
}

Series gen_stationary(const Matrix& cov, int samples, int tau, std::uint64_t seed) {
  require(samples >= 1, "gen_stationary: samples must be >= 1");
  if (!cov.allFinite()) throw InputError("gen_stationary: non-finite covariance");
  const Vector h = ma_coefficients(tau);
  std::mt19937_64 rng(seed);
  const Series z = gaussian_samples(cov, samples + tau, rng);
  Series x = Series::Zero(samples, cov.rows());
  for (int t = 0; t < samples; ++t)
    for (int j = 0; j <= tau; ++j) x.row(t) += h(j) * z.row(t + tau - j);
  return x;
}

ShiftSchedule ShiftSchedule::standard() {
  ShiftSchedule s;
  for (double a : {0.1, 0.4, 0.6, 0.1, 0.3, 0.6}) s.segments.push_back({1000, a});
  return s;
}

int ShiftSchedule::test_length() const {
  int n = 0;
  for (const auto& seg : segments) n += seg.length;
  return n;
}

ShiftData gen_nonstationary(const ShiftSchedule& schedule, int n, std::uint64_t seed) {
  require(n >= 1, "gen_nonstationary: n must be >= 1");
  require(schedule.train_length >= 1, "gen_nonstationary: train_length must be >= 1");
  require(std::abs(schedule.train_alpha) < 1.0, "gen_nonstationary: |alpha| must be < 1");
  for (const auto& seg : schedule.segments) {
    require(seg.length >= 1, "gen_nonstationary: segment lengths must be >= 1");
    require(std::abs(seg.alpha) < 1.0, "gen_nonstationary: |alpha| must be < 1");
  }
  std::mt19937_64 rng(seed);
  TailProfile profile{n, schedule.init_tail, 0, derive_seed(seed, 0x5eed)};
  const Matrix c0 = make_covariance(profile);
  std::normal_distribution<double> normal(0.0, 1.0);

  ShiftData out;
  out.train.resize(schedule.train_length, n);
  out.test.resize(schedule.test_length(), n);
  Vector x = gaussian_samples(c0, 1, rng).row(0).transpose();
  auto advance = [&](double alpha) {
    Vector eps(n);
    for (int i = 0; i < n; ++i) eps(i) = normal(rng);
    x = alpha * x + eps;
  };
  out.train.row(0) = x.transpose();
  for (int t = 1; t < schedule.train_length; ++t) {
    advance(schedule.train_alpha);
    out.train.row(t) = x.transpose();
  }
  int t = 0;
  for (const auto& seg : schedule.segments) {
    out.change_points.push_back(t);
    for (int k = 0; k < seg.length; ++k, ++t) {
      advance(seg.alpha);
      out.test.row(t) = x.transpose();
    }
  }
  return out;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  // splitmix64 finalizer over the combined words
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace stvnn

namespace stvnn {

Series synthetic_stationary(int n, int samples, double tail, int tau, std::uint64_t seed) {
  const Matrix c = make_covariance(TailProfile{n, tail, 0, derive_seed(seed, 1)});
  return gen_stationary(c, samples, tau, derive_seed(seed, 2));
}

}  // namespace stvnn
