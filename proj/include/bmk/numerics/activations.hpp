#pragma once

#include <cmath>

namespace bmk {

inline double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// x for x < 0, 1 - exp(-x) otherwise.
inline double negative_celu(double x) { return x < 0.0 ? x : -std::expm1(-x); }
inline double negative_celu_grad(double x) { return x < 0.0 ? 1.0 : std::exp(-x); }

}  // namespace bmk
