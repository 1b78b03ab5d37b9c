#include "stvnn/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace stvnn {

FilterBound filter_bound(const BoundInputs& in) {
  if (!(in.t > 0.0)) throw PreconditionError("filter_bound: t must be positive");
  require(in.n >= 1 && in.memory >= 1, "filter_bound: N and T must be >= 1");
  require(in.eta > 0.0, "filter_bound: eta must be positive");
  FilterBound b;
  const double spread = in.k_max * std::exp(in.epsilon / 2.0) +
                        in.q * in.g * in.cov_norm * std::sqrt(std::log(static_cast<double>(in.n)) + in.u);
  b.covariance_term = in.lipschitz * in.memory * in.n * spread / std::sqrt(in.t);
  b.suboptimality_term = in.h_star_norm * in.h_star_norm / (2.0 * in.eta * in.t);
  b.total = b.covariance_term + b.suboptimality_term;
  return b;
}

double network_bound(double beta, int layers, int width) {
  require(layers >= 1 && width >= 1, "network_bound: L and F must be >= 1");
  return layers * std::pow(static_cast<double>(width), layers - 1) * beta;
}

double vnn_bound(double beta, int layers, int width, int memory) {
  require(layers >= 1 && width >= 1 && memory >= 1, "vnn_bound: L, F and T must be >= 1");
  return layers * std::pow(static_cast<double>(width) * memory, layers - 1) * beta;
}

DivergentBoundError::DivergentBoundError(int i_, int j_)
    : Error("pca_bound: eigenvalues " + std::to_string(i_) + " and " + std::to_string(j_) +
            " coincide; the bound diverges"),
      i(i_),
      j(j_) {}

double pca_bound(double t, const Vector& eigenvalues, const Vector& kurtosis, double epsilon) {
  if (!(t > 0.0)) throw PreconditionError("pca_bound: t must be positive");
  const Eigen::Index n = eigenvalues.size();
  require(n >= 2, "pca_bound: need at least two eigenvalues");
  require(kurtosis.size() == n, "pca_bound: one kurtosis term per eigenvalue");
  double worst = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      const double gap = std::abs(eigenvalues(i) - eigenvalues(j));
      if (gap == 0.0) throw DivergentBoundError(static_cast<int>(i), static_cast<int>(j));
      worst = std::max(worst, kurtosis(j) / gap);
    }
  const double nd = static_cast<double>(n);
  return 2.0 * nd / std::sqrt(t) * std::sqrt(nd - 1.0) * std::exp(epsilon / 2.0) * worst;
}

double kurtosis_term(const Series& samples, const Vector& direction, double eigenvalue) {
  if (samples.rows() == 0) throw InputError("kurtosis_term: empty sample set");
  require(direction.size() == samples.cols(), "kurtosis_term: dimension mismatch");
  const Vector proj = samples * direction;
  const Vector sq_norms = samples.rowwise().squaredNorm();
  const double m = (proj.array().square() * sq_norms.array()).mean();
  return std::sqrt(std::max(0.0, m - eigenvalue * eigenvalue));
}

Vector kurtosis_terms(const Series& samples, const SpectralDecomposition& decomp) {
  Vector k(decomp.size());
  for (Eigen::Index j = 0; j < decomp.size(); ++j)
    k(j) = kurtosis_term(samples, decomp.eigenvectors.col(j), decomp.eigenvalues(j));
  return k;
}

double estimate_g(const Series& samples, double delta) {
  if (samples.rows() == 0) throw InputError("estimate_g: empty input");
  require(samples.rows() >= 100, "estimate_g: need at least 100 samples");
  require(delta > 0.0 && delta < 1.0, "estimate_g: delta must lie in (0, 1)");
  const Vector norms = samples.rowwise().norm();
  const double rms = std::sqrt(norms.squaredNorm() / static_cast<double>(norms.size()));
  if (rms == 0.0) return 1.0;
  std::vector<double> ratios(norms.data(), norms.data() + norms.size());
  for (double& r : ratios) r /= rms;
  std::sort(ratios.begin(), ratios.end());
  // smallest G covering a (1 - delta) fraction of the samples
  const auto covered = static_cast<std::size_t>(std::ceil((1.0 - delta) * static_cast<double>(ratios.size())));
  const double q = ratios[std::max<std::size_t>(covered, 1) - 1];
  return std::max(1.0, q);
}

double measure_embedding_gap(const NetworkParams& model_a, const Matrix& cov_a, const NetworkParams& model_b,
                             const Matrix& cov_b, const SignalWindow& window) {
  const Matrix ea = forward(model_a, cov_a, window).embedding;
  const Matrix eb = forward(model_b, cov_b, window).embedding;
  if (ea.rows() != eb.rows() || ea.cols() != eb.cols()) throw PreconditionError("embedding gap: shape mismatch");
  return (ea - eb).norm();
}

double projection_gap(const SpectralDecomposition& a, const SpectralDecomposition& b, const Vector& x, int r) {
  if (a.size() != b.size() || x.size() != a.size()) throw PreconditionError("projection gap: dimension mismatch");
  const Eigen::Index k = r <= 0 ? a.size() : std::min<Eigen::Index>(r, a.size());
  return (a.eigenvectors.leftCols(k).transpose() * x - b.eigenvectors.leftCols(k).transpose() * x).norm();
}

double parameter_norm(const NetworkParams& params) {
  double s = 0.0;
  params.for_each_block([&](const Matrix& m) { s += m.squaredNorm(); });
  return std::sqrt(s);
}

}  // namespace stvnn
