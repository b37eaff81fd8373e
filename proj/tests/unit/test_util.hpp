#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "bmk/numerics/matrix.hpp"
#include "bmk/numerics/tape.hpp"

namespace bmk::testing {

inline Matrix random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c,
                            double scale = 1.0) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * n(rng);
  return m;
}

inline double spectral_norm(const Matrix& m) {
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues()(0);
}

/// Builds f on a fresh tape from leaf values; returns the scalar output.
using TapeFn = std::function<ad::Var(ad::Tape&, const std::vector<ad::Var>&)>;

inline double eval_tape_fn(const TapeFn& f, const std::vector<Matrix>& inputs) {
  ad::Tape tape;
  std::vector<ad::Var> leaves;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    leaves.push_back(tape.param(inputs[i], static_cast<int>(i)));
  }
  return f(tape, leaves).scalar();
}

/// Max relative error (per input, Frobenius) between reverse-mode gradients
/// and central differences with step h.
inline double gradient_check(const TapeFn& f, const std::vector<Matrix>& inputs,
                             double h = 1e-6) {
  ad::Tape tape;
  std::vector<ad::Var> leaves;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    leaves.push_back(tape.param(inputs[i], static_cast<int>(i)));
  }
  const auto grads = tape.backward(f(tape, leaves));
  double worst = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    Matrix fd(inputs[i].rows(), inputs[i].cols());
    for (Eigen::Index k = 0; k < inputs[i].size(); ++k) {
      auto plus = inputs;
      auto minus = inputs;
      plus[i].data()[k] += h;
      minus[i].data()[k] -= h;
      fd.data()[k] = (eval_tape_fn(f, plus) - eval_tape_fn(f, minus)) / (2.0 * h);
    }
    auto it = grads.find(static_cast<int>(i));
    const Matrix ad = it == grads.end() ? Matrix::Zero(fd.rows(), fd.cols()) : it->second;
    const double denom = std::max(fd.norm(), 1e-8);
    worst = std::max(worst, (ad - fd).norm() / denom);
  }
  return worst;
}

}  // namespace bmk::testing
