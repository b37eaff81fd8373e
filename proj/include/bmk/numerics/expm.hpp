#pragma once

#include <utility>
#include <vector>

#include "bmk/numerics/matrix.hpp"

namespace bmk {

/// Matrix exponential by scaling and squaring with a fixed degree-13 Pade
/// approximant. exp(0) is returned as the identity exactly.
Matrix matrix_exp(const Matrix& m);

/// Returns (exp(M), L(M, E)) where L is the Frechet derivative of the
/// exponential at M in direction E (equivalently the upper-right block of
/// exp([[M, E], [0, M]])). Uses the same Pade [13/13] and scaling as
/// matrix_exp, differentiated through the squaring phase.
std::pair<Matrix, Matrix> matrix_exp_frechet(const Matrix& m, const Matrix& e);
/// Several directions sharing the powers of M.
std::pair<Matrix, std::vector<Matrix>> matrix_exp_frechet(const Matrix& m, const std::vector<Matrix>& dirs);

/// (exp(a*delta) - 1) / a evaluated without cancellation; equals delta at a = 0.
double phi1(double a, double delta);
/// Partial derivatives of phi1 with respect to a and delta.
double phi1_da(double a, double delta);
double phi1_ddelta(double a, double delta);

Vector phi1(const Vector& a, const Vector& delta);

}  // namespace bmk
