#include "bmk/numerics/spectral.hpp"

#include <cmath>

#include "bmk/numerics/eig.hpp"

namespace bmk {

SpectralPenalty spectral_penalty(const Matrix& a, double margin) {
  require_square(a, "spectral_penalty");
  SpectralPenalty out;
  out.grad = Matrix::Zero(a.rows(), a.cols());
  const double threshold = 1.0 - margin;

  // Induced-norm bound on the spectral radius: nothing can be active.
  const double row_bound = a.cwiseAbs().rowwise().sum().maxCoeff();
  const double col_bound = a.cwiseAbs().colwise().sum().maxCoeff();
  if (a.size() == 0 || std::min(row_bound, col_bound) <= threshold) return out;

  const auto spectrum = eig_with_vectors(a, threshold);
  constexpr double kClusterTol = 1e-8;
  for (std::size_t i = 0; i < spectrum.above.size(); ++i) {
    const auto& t = spectrum.above[i];
    const double modulus = std::abs(t.value);
    out.value += modulus - threshold;
    ++out.active;

    bool clustered = false;
    for (std::size_t j = 0; j < spectrum.above.size(); ++j) {
      if (j != i && std::abs(spectrum.above[j].value - t.value) < kClusterTol) {
        clustered = true;
        break;
      }
    }
    const Complex denom = t.left.dot(t.right);  // y^H x
    if (clustered || std::abs(denom) < 1e-300 || modulus == 0.0) {
      ++out.dropped;
      continue;
    }
    const Complex c = std::conj(t.value) / (modulus * denom);
    out.grad += (c * (t.left.conjugate() * t.right.transpose())).real();
  }
  return out;
}

}  // namespace bmk
