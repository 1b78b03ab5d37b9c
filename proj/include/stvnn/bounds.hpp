#pragma once

#include <utility>
#include <vector>

#include "stvnn/network.hpp"
#include "stvnn/spectral.hpp"

namespace stvnn {

// Inputs of the filter stability bound. Q is an unknown absolute constant in
// the theory; it defaults to 1 so the bound is read as a scaling prediction.
struct BoundInputs {
  double t = 1.0;
  int n = 1;
  int memory = 1;  // T
  double lipschitz = 0.0;  // P
  double k_max = 0.0;
  double cov_norm = 0.0;  // spectral norm of C
  double g = 1.0;
  double q = 1.0;
  double eta = 1e-3;
  double h_star_norm = 0.0;
  double epsilon = 2.0;
  double u = 2.0;
};

struct FilterBound {
  double covariance_term = 0.0;
  double suboptimality_term = 0.0;
  double total = 0.0;
};

// (1/sqrt t) P T N (k_max e^{eps/2} + Q G ||C|| sqrt(log N + u)) and ||h*||^2 / (2 eta t).
// The O(1/t) remainder is not included.
FilterBound filter_bound(const BoundInputs& in);

// L F^{L-1} beta.
double network_bound(double beta, int layers, int width);

// L (F T)^{L-1} beta.
double vnn_bound(double beta, int layers, int width, int memory);

class DivergentBoundError : public Error {
 public:
  DivergentBoundError(int i, int j);
  int i, j;
};

// (2N / sqrt t) sqrt(N-1) e^{eps/2} max_{i != j} k_j / |lambda_i - lambda_j|.
double pca_bound(double t, const Vector& eigenvalues, const Vector& kurtosis, double epsilon = 2.0);

// sqrt(max(0, mean[(x^T v)^2 ||x||^2] - lambda^2)); rows of `samples` are
// centered observations.
double kurtosis_term(const Series& samples, const Vector& direction, double eigenvalue);

// Kurtosis terms for every eigenpair of `decomp`.
Vector kurtosis_terms(const Series& samples, const SpectralDecomposition& decomp);

// (1 - delta) quantile of ||x|| / sqrt(mean ||x||^2), floored at 1.
double estimate_g(const Series& samples, double delta = 0.01);

// Frobenius norm of the embedding difference between two (model, covariance)
// pairs on the same window (newest first, spans the receptive field).
double measure_embedding_gap(const NetworkParams& model_a, const Matrix& cov_a, const NetworkParams& model_b,
                             const Matrix& cov_b, const SignalWindow& window);

// ||Va^T x - Vb^T x|| over the first r coordinates (all when r <= 0).
double projection_gap(const SpectralDecomposition& a, const SpectralDecomposition& b, const Vector& x, int r = 0);

// Flattened parameter norm.
double parameter_norm(const NetworkParams& params);

}  // namespace stvnn
