#include <cmath>
#include <limits>
#include <random>

#include "doctest.h"

#include "qp_oracle.hpp"

using namespace bmk;
using namespace bmk::qp;

namespace {

QpProblem make(const Matrix& h, const Vector& g, const Vector& lb, const Vector& ub) { return {h, g, lb, ub}; }

}  // namespace

TEST_CASE("closed-form instances") {
  auto s1 = solve_box_qp(make(Matrix::Identity(1, 1), Vector::Constant(1, -1.0), Vector::Constant(1, -0.5),
                              Vector::Constant(1, 0.5)));
  CHECK(s1.status == QpStatus::Solved);
  CHECK(s1.x(0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(s1.y(0) == doctest::Approx(0.5).epsilon(1e-9));

  auto s2 = solve_box_qp(make(2.0 * Matrix::Identity(2, 2), Eigen::Vector2d(-2, 0), Vector::Constant(2, -10),
                              Vector::Constant(2, 10)));
  CHECK(s2.status == QpStatus::Solved);
  CHECK(std::abs(s2.x(0) - 1.0) <= 1e-9);
  CHECK(std::abs(s2.x(1)) <= 1e-9);
}

TEST_CASE("infinite bounds and infeasible boxes") {
  const double inf = std::numeric_limits<double>::infinity();
  auto s = solve_box_qp(make(Matrix::Identity(2, 2), Eigen::Vector2d(-3, 4), Vector::Constant(2, -inf),
                             Eigen::Vector2d(inf, 1.0)));
  CHECK(s.status == QpStatus::Solved);
  CHECK(s.x(0) == doctest::Approx(3.0));
  CHECK(s.x(1) == doctest::Approx(-4.0));
  auto bad = solve_box_qp(make(Matrix::Identity(2, 2), Vector::Zero(2), Eigen::Vector2d(0, 1), Eigen::Vector2d(1, 0)));
  CHECK(bad.status == QpStatus::InfeasibleBox);
}

TEST_CASE("matches exhaustive active-set enumeration") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + trial % 6;
    const auto p = testing::random_box_qp(rng, n);
    const auto oracle = testing::brute_force_box_qp(p);
    REQUIRE(oracle.has_value());
    const auto s = solve_box_qp(p);
    CHECK(s.status == QpStatus::Solved);
    CHECK((s.x - *oracle).cwiseAbs().maxCoeff() <= 1e-6);
    const auto r = kkt_residual(p, s.x, s.y);
    CHECK(r.primal <= 1e-6);
    CHECK(r.dual <= 1e-6);
  }
}

TEST_CASE("KKT residuals") {
  const auto p = make(2.0 * Matrix::Identity(2, 2), Eigen::Vector2d(-2, 0), Vector::Constant(2, -10),
                      Vector::Constant(2, 10));
  const auto exact = kkt_residual(p, Eigen::Vector2d(1, 0), Vector::Zero(2));
  CHECK(exact.primal <= 1e-12);
  CHECK(exact.dual <= 1e-12);
  const Vector x(Eigen::Vector2d(3, 1));
  const auto off = kkt_residual(p, x, Vector::Zero(2));
  CHECK(off.dual == doctest::Approx((p.h * x + p.g).cwiseAbs().maxCoeff()));
  CHECK(off.dual > 0.0);
  CHECK(kkt_residual(p, Eigen::Vector2d(11, 0), Vector::Zero(2)).primal == doctest::Approx(1.0));
}

TEST_CASE("solver properties") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 2 + trial % 5;
    const auto p = testing::random_box_qp(rng, n);
    const auto cold = solve_box_qp(p);
    REQUIRE(cold.status == QpStatus::Solved);

    auto scaled = p;
    scaled.h *= 37.0;
    scaled.g *= 37.0;
    CHECK((solve_box_qp(scaled).x - cold.x).cwiseAbs().maxCoeff() <= 1e-6);

    QpSolution guess;
    guess.x = Vector::Constant(n, 0.3);
    guess.y = Vector::Constant(n, -0.2);
    CHECK((solve_box_qp(p, &guess).x - cold.x).cwiseAbs().maxCoeff() <= 1e-6);

    const auto again = solve_box_qp(p, &cold);
    CHECK(again.iterations <= 5);
    CHECK((again.x - cold.x).cwiseAbs().maxCoeff() <= 1e-6);

    auto tight = p;
    tight.lb *= 0.5;
    tight.ub *= 0.5;
    CHECK(solve_box_qp(tight).objective >= cold.objective - 1e-9);
  }
}

TEST_CASE("semidefinite Hessian is regularized") {
  Matrix h = Matrix::Zero(2, 2);
  h(0, 0) = 1.0;
  const auto s = solve_box_qp(make(h, Eigen::Vector2d(-1, -1), Vector::Constant(2, -1), Vector::Constant(2, 1)));
  CHECK(s.status == QpStatus::Solved);
  CHECK(s.x(0) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(s.x(1) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("iteration cap reports max-iter with the best iterate") {
  std::mt19937_64 rng(5);
  const auto p = testing::random_box_qp(rng, 6);
  QpSettings st;
  st.max_iter = 2;
  st.polish = false;
  const auto s = solve_box_qp(p, nullptr, st);
  CHECK(s.status == QpStatus::MaxIter);
  CHECK(s.x.allFinite());
  CHECK(s.iterations == 2);
}
