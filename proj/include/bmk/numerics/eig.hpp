#pragma once

#include <complex>
#include <vector>

#include "bmk/numerics/matrix.hpp"

namespace bmk {

/// Raised when the shifted QR iteration exhausts its sweep budget (30 n).
/// Carries the partially reduced Hessenberg matrix for inspection.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, Matrix partial)
      : std::runtime_error(what), partial_(std::move(partial)) {}
  const Matrix& partial() const { return partial_; }

 private:
  Matrix partial_;
};

using Complex = std::complex<double>;

/// All eigenvalues of a real square matrix, ordered by descending modulus.
std::vector<Complex> eigenvalues(const Matrix& m);

/// Eigenvalue moduli, descending.
std::vector<double> eig_moduli(const Matrix& m);

struct EigenTriple {
  Complex value;
  CVector right;  // M x = lambda x
  CVector left;   // y^H M = lambda y^H
};

struct SpectrumWithVectors {
  std::vector<Complex> values;  // descending modulus
  std::vector<double> moduli;
  // Eigenvectors only for eigenvalues with modulus strictly above the
  // threshold, in the same order as `values`.
  std::vector<EigenTriple> above;
};

SpectrumWithVectors eig_with_vectors(const Matrix& m, double threshold);

}  // namespace bmk
