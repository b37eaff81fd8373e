#include "bmk/numerics/eig.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>

namespace bmk {
namespace {

double sign_of(double a, double b) { return b >= 0.0 ? std::abs(a) : -std::abs(a); }

// Francis double-shift QR on an upper Hessenberg matrix (eigenvalues only).
std::vector<Complex> hessenberg_qr(Matrix a) {
  const int n = static_cast<int>(a.rows());
  std::vector<Complex> w(n);
  const double eps = std::numeric_limits<double>::epsilon();
  const int budget = 30 * std::max(n, 1);
  int total_sweeps = 0;

  double anorm = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = std::max(i - 1, 0); j < n; ++j) anorm += std::abs(a(i, j));

  int nn = n - 1;
  double t = 0.0;
  while (nn >= 0) {
    int its = 0;
    int l = 0;
    do {
      for (l = nn; l > 0; --l) {
        double s = std::abs(a(l - 1, l - 1)) + std::abs(a(l, l));
        if (s == 0.0) s = anorm;
        if (std::abs(a(l, l - 1)) <= eps * s) {
          a(l, l - 1) = 0.0;
          break;
        }
      }
      double x = a(nn, nn);
      if (l == nn) {
        w[nn--] = x + t;
      } else {
        double y = a(nn - 1, nn - 1);
        double ww = a(nn, nn - 1) * a(nn - 1, nn);
        if (l == nn - 1) {
          const double p = 0.5 * (y - x);
          const double q = p * p + ww;
          double z = std::sqrt(std::abs(q));
          x += t;
          if (q >= 0.0) {
            z = p + sign_of(z, p);
            w[nn - 1] = w[nn] = x + z;
            if (z != 0.0) w[nn] = x - ww / z;
          } else {
            w[nn] = Complex(x + p, -z);
            w[nn - 1] = std::conj(w[nn]);
          }
          nn -= 2;
        } else {
          if (total_sweeps >= budget) {
            throw ConvergenceError("eigenvalues: QR iteration did not converge in " +
                                       std::to_string(budget) + " sweeps",
                                   a);
          }
          if (its == 10 || its == 20) {
            // exceptional shift
            t += x;
            for (int i = 0; i <= nn; ++i) a(i, i) -= x;
            const double s = std::abs(a(nn, nn - 1)) + std::abs(a(nn - 1, nn - 2));
            y = x = 0.75 * s;
            ww = -0.4375 * s * s;
          }
          ++its;
          ++total_sweeps;
          int m = nn - 2;
          double p = 0, q = 0, r = 0, z = 0;
          for (; m >= l; --m) {
            z = a(m, m);
            r = x - z;
            double s = y - z;
            p = (r * s - ww) / a(m + 1, m) + a(m, m + 1);
            q = a(m + 1, m + 1) - z - r - s;
            r = a(m + 2, m + 1);
            s = std::abs(p) + std::abs(q) + std::abs(r);
            p /= s;
            q /= s;
            r /= s;
            if (m == l) break;
            const double u = std::abs(a(m, m - 1)) * (std::abs(q) + std::abs(r));
            const double v = std::abs(p) * (std::abs(a(m - 1, m - 1)) + std::abs(z) +
                                            std::abs(a(m + 1, m + 1)));
            if (u <= eps * v) break;
          }
          for (int i = m; i < nn - 1; ++i) {
            a(i + 2, i) = 0.0;
            if (i != m) a(i + 2, i - 1) = 0.0;
          }
          for (int k = m; k < nn; ++k) {
            if (k != m) {
              p = a(k, k - 1);
              q = a(k + 1, k - 1);
              r = 0.0;
              if (k + 1 != nn) r = a(k + 2, k - 1);
              x = std::abs(p) + std::abs(q) + std::abs(r);
              if (x != 0.0) {
                p /= x;
                q /= x;
                r /= x;
              }
            }
            const double s = sign_of(std::sqrt(p * p + q * q + r * r), p);
            if (s != 0.0) {
              if (k == m) {
                if (l != m) a(k, k - 1) = -a(k, k - 1);
              } else {
                a(k, k - 1) = -s * x;
              }
              p += s;
              x = p / s;
              y = q / s;
              z = r / s;
              q /= p;
              r /= p;
              for (int j = k; j <= nn; ++j) {
                p = a(k, j) + q * a(k + 1, j);
                if (k + 1 != nn) {
                  p += r * a(k + 2, j);
                  a(k + 2, j) -= p * z;
                }
                a(k + 1, j) -= p * y;
                a(k, j) -= p * x;
              }
              const int mmin = nn < k + 3 ? nn : k + 3;
              for (int i = l; i <= mmin; ++i) {
                p = x * a(i, k) + y * a(i, k + 1);
                if (k + 1 != nn) {
                  p += z * a(i, k + 2);
                  a(i, k + 2) -= p * r;
                }
                a(i, k + 1) -= p * q;
                a(i, k) -= p;
              }
            }
          }
        }
      }
    } while (l + 1 < nn);
  }
  return w;
}

void sort_by_modulus(std::vector<Complex>& v) {
  std::stable_sort(v.begin(), v.end(), [](const Complex& a, const Complex& b) {
    const double ma = std::abs(a), mb = std::abs(b);
    if (ma != mb) return ma > mb;
    if (a.real() != b.real()) return a.real() > b.real();
    return a.imag() > b.imag();
  });
}

// Inverse iteration for the null vector of (A - lambda I), A complex.
CVector inverse_iteration(const CMatrix& a, Complex lambda) {
  const auto n = a.rows();
  const double scale = std::max(a.cwiseAbs().maxCoeff(), 1.0);
  const Complex shift = lambda + Complex(1e-10 * scale, 1e-10 * scale);
  const CMatrix shifted = a - shift * CMatrix::Identity(n, n);
  Eigen::PartialPivLU<CMatrix> lu(shifted);
  CVector v = CVector::Ones(n) / std::sqrt(static_cast<double>(n));
  for (int it = 0; it < 3; ++it) {
    v = lu.solve(v);
    const double nv = v.norm();
    if (!(nv > 0.0) || !std::isfinite(nv)) break;
    v /= nv;
  }
  return v;
}

}  // namespace

std::vector<Complex> eigenvalues(const Matrix& m) {
  require_square(m, "eigenvalues");
  require_finite(m, "eigenvalues");
  if (m.rows() == 0) return {};
  Matrix h;
  if (m.rows() <= 2) {
    h = m;
  } else {
    Eigen::HessenbergDecomposition<Matrix> hd(m);
    h = hd.matrixH();
  }
  auto values = hessenberg_qr(h);
  sort_by_modulus(values);
  return values;
}

std::vector<double> eig_moduli(const Matrix& m) {
  const auto values = eigenvalues(m);
  std::vector<double> out;
  out.reserve(values.size());
  for (const auto& v : values) out.push_back(std::abs(v));
  return out;
}

SpectrumWithVectors eig_with_vectors(const Matrix& m, double threshold) {
  SpectrumWithVectors out;
  out.values = eigenvalues(m);
  for (const auto& v : out.values) out.moduli.push_back(std::abs(v));
  const CMatrix mc = m.cast<Complex>();
  const CMatrix mt = m.transpose().cast<Complex>();
  for (const auto& lambda : out.values) {
    if (!(std::abs(lambda) > threshold)) continue;
    EigenTriple t;
    t.value = lambda;
    t.right = inverse_iteration(mc, lambda);
    t.left = inverse_iteration(mt, std::conj(lambda));
    out.above.push_back(std::move(t));
  }
  return out;
}

}  // namespace bmk
