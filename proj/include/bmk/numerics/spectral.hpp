#pragma once

#include "bmk/numerics/matrix.hpp"

namespace bmk {

struct SpectralPenalty {
  double value = 0.0;
  Matrix grad;          // d value / d A, zero where contributions were dropped
  int active = 0;       // eigenvalues with |lambda| > 1 - margin
  int dropped = 0;      // active eigenvalues whose gradient was dropped (clustered)
};

/// sum_j max(0, |lambda_j(A)| - 1 + margin) with its gradient through
/// d|lambda| / dA = Re(conj(lambda)/|lambda| * conj(y) x^T / (y^H x)).
/// Eigenvalues closer than 1e-8 to another active eigenvalue contribute to the
/// value but not to the gradient. Throws ConvergenceError from the eigensolver.
SpectralPenalty spectral_penalty(const Matrix& a, double margin);

}  // namespace bmk
