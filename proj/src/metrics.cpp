#include "stvnn/metrics.hpp"

#include <cmath>
#include <numeric>

namespace stvnn {

MetricsRecord compute_metrics(const Matrix& predictions, const Matrix& targets, SmapeVariant variant) {
  if (predictions.size() == 0) throw InputError("compute_metrics: empty input");
  if (predictions.rows() != targets.rows() || predictions.cols() != targets.cols())
    throw PreconditionError("compute_metrics: shape mismatch");
  MetricsRecord r;
  double se = 0.0, ae = 0.0, sm = 0.0;
  long scored = 0;
  const double factor = variant == SmapeVariant::Symmetric ? 2.0 : 1.0;
  for (Eigen::Index j = 0; j < predictions.cols(); ++j)
    for (Eigen::Index i = 0; i < predictions.rows(); ++i) {
      const double p = predictions(i, j), y = targets(i, j);
      const double e = p - y;
      se += e * e;
      ae += std::abs(e);
      const double denom = std::abs(p) + std::abs(y);
      if (denom < 1e-12) {
        ++r.smape_skipped;
        continue;
      }
      sm += factor * std::abs(e) / denom;
      ++scored;
    }
  r.count = static_cast<long>(predictions.size());
  r.mse = se / r.count;
  r.mae = ae / r.count;
  r.smape = scored > 0 ? 100.0 * sm / scored : 0.0;
  return r;
}

Aggregate aggregate(const std::vector<double>& values) {
  if (values.empty()) throw InputError("aggregate: no values");
  Aggregate a;
  a.mean = std::accumulate(values.begin(), values.end(), 0.0) / values.size();
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - a.mean) * (v - a.mean);
    a.std = std::sqrt(ss / (values.size() - 1));
  }
  return a;
}

SplitSizes chronological_split(int rows, const std::array<double, 3>& fractions) {
  require(rows >= 0, "chronological_split: negative length");
  double sum = 0.0;
  for (double f : fractions) {
    require(f >= 0.0, "chronological_split: fractions must be non-negative");
    sum += f;
  }
  require(std::abs(sum - 1.0) < 1e-9, "chronological_split: fractions must sum to 1");
  SplitSizes s;
  // small epsilon so that e.g. 0.2 * 10 does not floor to 1
  s.train = static_cast<int>(std::floor(fractions[0] * rows + 1e-9));
  s.val = static_cast<int>(std::floor(fractions[1] * rows + 1e-9));
  s.test = rows - s.train - s.val;
  return s;
}

Standardizer Standardizer::fit(const Series& reference) {
  if (reference.rows() < 2) throw InputError("standardizer: need at least two rows");
  Standardizer s;
  s.mean = reference.colwise().mean().transpose();
  s.scale.resize(reference.cols());
  for (Eigen::Index j = 0; j < reference.cols(); ++j) {
    const double var = (reference.col(j).array() - s.mean(j)).square().mean();
    s.scale(j) = var > 1e-24 ? std::sqrt(var) : 1.0;
  }
  return s;
}

Standardizer Standardizer::identity(Eigen::Index n) {
  return Standardizer{Vector::Zero(n), Vector::Ones(n)};
}

Series Standardizer::apply(const Series& x) const {
  require(x.cols() == mean.size(), "standardizer: dimension mismatch");
  Series out = x;
  for (Eigen::Index j = 0; j < x.cols(); ++j) out.col(j) = (x.col(j).array() - mean(j)) / scale(j);
  return out;
}

Series Standardizer::invert(const Series& z) const {
  require(z.cols() == mean.size(), "standardizer: dimension mismatch");
  Series out = z;
  for (Eigen::Index j = 0; j < z.cols(); ++j) out.col(j) = z.col(j).array() * scale(j) + mean(j);
  return out;
}

Vector Standardizer::invert(const Vector& z) const {
  require(z.size() == mean.size(), "standardizer: dimension mismatch");
  return (z.array() * scale.array() + mean.array()).matrix();
}

}  // namespace stvnn
