#include "stvnn/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <Eigen/Eigenvalues>

namespace stvnn {

namespace {
constexpr double kSymmetryTol = 1e-12;
}

double max_asymmetry(const Matrix& m) {
  if (m.rows() != m.cols()) throw PreconditionError("max_asymmetry: matrix is not square");
  double worst = 0.0;
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = j + 1; i < m.rows(); ++i) worst = std::max(worst, std::abs(m(i, j) - m(j, i)));
  return worst;
}

void canonicalize_signs(Matrix& vectors) {
  for (Eigen::Index c = 0; c < vectors.cols(); ++c) {
    Eigen::Index arg = 0;
    double best = -1.0;
    for (Eigen::Index r = 0; r < vectors.rows(); ++r) {
      const double a = std::abs(vectors(r, c));
      if (a > best) {  // strict: ties keep the lowest index
        best = a;
        arg = r;
      }
    }
    if (vectors(arg, c) < 0.0) vectors.col(c) = -vectors.col(c);
  }
}

SpectralDecomposition sym_eig(const Matrix& matrix) {
  if (matrix.rows() < 1 || matrix.rows() != matrix.cols())
    throw PreconditionError("sym_eig: expected a non-empty square matrix");
  if (!matrix.allFinite()) throw InputError("sym_eig: matrix has non-finite entries");
  if (max_asymmetry(matrix) > kSymmetryTol * std::max(1.0, matrix.cwiseAbs().maxCoeff())) throw PreconditionError("sym_eig: matrix is not symmetric");

  Eigen::SelfAdjointEigenSolver<Matrix> solver(matrix, Eigen::ComputeEigenvectors);
  if (solver.info() != Eigen::Success) throw NumericalError("sym_eig: eigensolver did not converge");

  // Eigen returns ascending order; reverse into descending.
  SpectralDecomposition out;
  out.eigenvalues = solver.eigenvalues().reverse();
  out.eigenvectors = solver.eigenvectors().rowwise().reverse();
  canonicalize_signs(out.eigenvectors);
  return out;
}

Vector gft(const SpectralDecomposition& decomp, const Vector& signal) {
  if (signal.size() != decomp.eigenvectors.rows()) throw PreconditionError("gft: dimension mismatch");
  return decomp.eigenvectors.transpose() * signal;
}

Vector igft(const SpectralDecomposition& decomp, const Vector& coeffs) {
  if (coeffs.size() != decomp.eigenvectors.cols()) throw PreconditionError("igft: dimension mismatch");
  return decomp.eigenvectors * coeffs;
}

}  // namespace stvnn
