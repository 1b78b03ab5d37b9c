#pragma once

#include <array>
#include <vector>

#include "stvnn/types.hpp"

namespace stvnn {

enum class SmapeVariant {
  Symmetric,  // 2|yhat - y| / (|yhat| + |y|)
  Halved      // |yhat - y| / (|yhat| + |y|)
};

struct MetricsRecord {
  double mse = 0.0;
  double mae = 0.0;
  double smape = 0.0;     // percent
  long count = 0;         // entries scored
  long smape_skipped = 0; // entries whose sMAPE denominator vanished
};

// Rows of `predictions` and `targets` are time steps; all entries count.
MetricsRecord compute_metrics(const Matrix& predictions, const Matrix& targets,
                              SmapeVariant variant = SmapeVariant::Symmetric);

struct Aggregate {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; 0 for a single value
};

Aggregate aggregate(const std::vector<double>& values);

struct SplitSizes {
  int train = 0;
  int val = 0;
  int test = 0;
};

// Contiguous chronological split; floor for train and validation, remainder to test.
SplitSizes chronological_split(int rows, const std::array<double, 3>& fractions);

// Per-variable z-scoring with statistics from a reference block.
struct Standardizer {
  Vector mean;
  Vector scale;

  static Standardizer fit(const Series& reference);
  static Standardizer identity(Eigen::Index n);
  Series apply(const Series& x) const;
  Series invert(const Series& z) const;
  Vector invert(const Vector& z) const;
};

}  // namespace stvnn
