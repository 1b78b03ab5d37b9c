#pragma once

#include "stvnn/types.hpp"

namespace stvnn {

// Eigenpairs of a real symmetric matrix. Eigenvalues are sorted in
// non-increasing order and column i of `eigenvectors` pairs with eigenvalue i.
// Each eigenvector is sign-canonical: its largest-magnitude entry (lowest
// index on ties) is positive.
struct SpectralDecomposition {
  Vector eigenvalues;
  Matrix eigenvectors;

  Eigen::Index size() const { return eigenvalues.size(); }
};

// Largest absolute difference between m(i,j) and m(j,i).
double max_asymmetry(const Matrix& m);

// Flips the sign of each column so that its largest-magnitude entry is positive.
void canonicalize_signs(Matrix& vectors);

SpectralDecomposition sym_eig(const Matrix& matrix);

// Graph Fourier transform: projection of `signal` onto the eigenvectors.
Vector gft(const SpectralDecomposition& decomp, const Vector& signal);
Vector igft(const SpectralDecomposition& decomp, const Vector& coeffs);

}  // namespace stvnn
