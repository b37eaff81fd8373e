#include "bmk/numerics/expm.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

namespace bmk {
namespace {

// Pade [13/13] coefficients and the 1-norm bound below which no scaling is
// needed for double precision.
constexpr std::array<double, 14> kPade13 = {
    64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
    1187353796428800.0,  129060195264000.0,   10559470521600.0,
    670442572800.0,      33522128640.0,       1323241920.0,
    40840800.0,          960960.0,            16380.0,
    182.0,               1.0};
constexpr double kTheta13 = 5.371920351148152;

Matrix pade13(const Matrix& a) {
  const auto n = a.rows();
  const Matrix id = Matrix::Identity(n, n);
  const auto& b = kPade13;
  const Matrix a2 = a * a;
  const Matrix a4 = a2 * a2;
  const Matrix a6 = a4 * a2;
  const Matrix u_inner = a6 * (b[13] * a6 + b[11] * a4 + b[9] * a2) +
                         b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * id;
  const Matrix u = a * u_inner;
  const Matrix v = a6 * (b[12] * a6 + b[10] * a4 + b[8] * a2) + b[6] * a6 +
                   b[4] * a4 + b[2] * a2 + b[0] * id;
  return (v - u).partialPivLu().solve(v + u);
}

}  // namespace

Matrix matrix_exp(const Matrix& m) {
  require_square(m, "matrix_exp");
  require_finite(m, "matrix_exp");
  const auto n = m.rows();
  if (n == 0) return m;
  if (m.isZero(0.0)) return Matrix::Identity(n, n);

  const double norm1 = m.cwiseAbs().colwise().sum().maxCoeff();
  int s = 0;
  if (norm1 > kTheta13) {
    s = std::max(0, static_cast<int>(std::ceil(std::log2(norm1 / kTheta13))));
  }
  Matrix r = pade13(m / std::ldexp(1.0, s));
  for (int i = 0; i < s; ++i) r = r * r;
  return r;
}

std::pair<Matrix, std::vector<Matrix>> matrix_exp_frechet(const Matrix& m, const std::vector<Matrix>& dirs) {
  require_square(m, "matrix_exp_frechet");
  require_finite(m, "matrix_exp_frechet");
  const auto n = m.rows();
  for (const auto& e : dirs) {
    if (e.rows() != n || e.cols() != n) throw DimensionError("matrix_exp_frechet: direction shape differs from M");
    require_finite(e, "matrix_exp_frechet");
  }
  const double norm1 = n == 0 ? 0.0 : m.cwiseAbs().colwise().sum().maxCoeff();
  int s = 0;
  if (norm1 > kTheta13) s = std::max(0, static_cast<int>(std::ceil(std::log2(norm1 / kTheta13))));
  const double scale = std::ldexp(1.0, -s);

  const auto& b = kPade13;
  const Matrix id = Matrix::Identity(n, n);
  const Matrix a = m * scale;
  const Matrix a2 = a * a, a4 = a2 * a2, a6 = a4 * a2;
  const Matrix w1 = b[13] * a6 + b[11] * a4 + b[9] * a2;
  const Matrix w2 = b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * id;
  const Matrix z1 = b[12] * a6 + b[10] * a4 + b[8] * a2;
  const Matrix z2 = b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * id;
  const Matrix w = a6 * w1 + w2;
  const Matrix u = a * w;
  const Matrix v = a6 * z1 + z2;
  const auto lu = (v - u).partialPivLu();
  std::vector<Matrix> r(static_cast<std::size_t>(s) + 1);
  r[0] = lu.solve(v + u);
  for (int k = 0; k < s; ++k) r[static_cast<std::size_t>(k) + 1] = r[static_cast<std::size_t>(k)] * r[static_cast<std::size_t>(k)];

  std::vector<Matrix> out;
  out.reserve(dirs.size());
  for (const auto& dir : dirs) {
    const Matrix e = dir * scale;
    const Matrix m2 = a * e + e * a;
    const Matrix m4 = a2 * m2 + m2 * a2;
    const Matrix m6 = a4 * m2 + m4 * a2;
    const Matrix lw = a6 * (b[13] * m6 + b[11] * m4 + b[9] * m2) + m6 * w1 + (b[7] * m6 + b[5] * m4 + b[3] * m2);
    const Matrix lu_term = a * lw + e * w;
    const Matrix lv = a6 * (b[12] * m6 + b[10] * m4 + b[8] * m2) + m6 * z1 + (b[6] * m6 + b[4] * m4 + b[2] * m2);
    Matrix l = lu.solve(lu_term + lv + (lu_term - lv) * r[0]);
    for (int k = 0; k < s; ++k) {
      const Matrix& rk = r[static_cast<std::size_t>(k)];
      l = rk * l + l * rk;
    }
    out.push_back(std::move(l));
  }
  Matrix expm = m.isZero(0.0) ? id : r.back();
  return {std::move(expm), std::move(out)};
}

std::pair<Matrix, Matrix> matrix_exp_frechet(const Matrix& m, const Matrix& e) {
  auto [x, l] = matrix_exp_frechet(m, std::vector<Matrix>{e});
  return {std::move(x), std::move(l.front())};
}

double phi1(double a, double delta) {
  if (a == 0.0) return delta;
  return std::expm1(a * delta) / a;
}

double phi1_da(double a, double delta) {
  const double x = a * delta;
  if (std::abs(x) < 0.1) {
    // delta^2 * sum_k x^k (k+1)/(k+2)!
    double fact = 2.0;
    double xk = 1.0;
    double sum = 0.0;
    for (int k = 0; k < 14; ++k) {
      sum += xk * (k + 1) / fact;
      xk *= x;
      fact *= (k + 3);
    }
    return delta * delta * sum;
  }
  return delta * std::exp(x) / a - std::expm1(x) / (a * a);
}

double phi1_ddelta(double a, double delta) { return std::exp(a * delta); }

Vector phi1(const Vector& a, const Vector& delta) {
  if (a.size() != delta.size()) {
    throw DimensionError("phi1: a and delta differ in length");
  }
  Vector out(a.size());
  for (Eigen::Index i = 0; i < a.size(); ++i) out(i) = phi1(a(i), delta(i));
  return out;
}

}  // namespace bmk
