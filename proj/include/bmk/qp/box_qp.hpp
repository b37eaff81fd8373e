#pragma once

#include <string>

#include "bmk/numerics/matrix.hpp"

namespace bmk::qp {

/// minimize 1/2 x'Hx + g'x subject to lb <= x <= ub (bounds may be infinite).
struct QpProblem {
  Matrix h;
  Vector g;
  Vector lb, ub;
};

enum class QpStatus { Solved, MaxIter, InfeasibleBox };
std::string to_string(QpStatus s);

struct QpSolution {
  Vector x;
  Vector y;  // bound multipliers: Hx + g + y = 0, y > 0 on active upper bounds
  double objective = 0.0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  int iterations = 0;
  QpStatus status = QpStatus::Solved;
  bool polished = false;
};

struct QpSettings {
  double rho = 0.1;
  double sigma = 1e-6;
  double alpha = 1.6;
  double eps_abs = 1e-6;
  double eps_rel = 1e-6;
  int max_iter = 4000;
  int adapt_interval = 25;
  bool polish = true;
};

/// ADMM (OSQP splitting with constraint matrix I) followed by an active-set
/// polish. `warm` seeds both the primal and the dual iterates.
QpSolution solve_box_qp(const QpProblem& p, const QpSolution* warm = nullptr, const QpSettings& s = {});

double objective(const QpProblem& p, const Vector& x);

struct KktResidual {
  double primal = 0.0;  // max box violation
  double dual = 0.0;    // ||Hx + g + y||_inf
};
KktResidual kkt_residual(const QpProblem& p, const Vector& x, const Vector& y);

}  // namespace bmk::qp
