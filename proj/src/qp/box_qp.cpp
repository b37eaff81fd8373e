#include "bmk/qp/box_qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace bmk::qp {

std::string to_string(QpStatus s) {
  switch (s) {
    case QpStatus::Solved: return "solved";
    case QpStatus::MaxIter: return "max-iter";
    case QpStatus::InfeasibleBox: return "infeasible-box";
  }
  return "unknown";
}

double objective(const QpProblem& p, const Vector& x) { return 0.5 * x.dot(p.h * x) + p.g.dot(x); }

KktResidual kkt_residual(const QpProblem& p, const Vector& x, const Vector& y) {
  KktResidual r;
  const Vector clipped = x.cwiseMax(p.lb).cwiseMin(p.ub);
  r.primal = x.size() ? (x - clipped).cwiseAbs().maxCoeff() : 0.0;
  r.dual = x.size() ? (p.h * x + p.g + y).cwiseAbs().maxCoeff() : 0.0;
  return r;
}

namespace {

double inf_norm(const Vector& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

Eigen::LLT<Matrix> factor(const Matrix& h, double shift) {
  const Eigen::Index n = h.rows();
  Matrix k = h;
  k.diagonal().array() += shift;
  Eigen::LLT<Matrix> llt(k);
  if (llt.info() != Eigen::Success) {
    k.diagonal().array() += 1e-9;
    llt.compute(k);
    if (llt.info() != Eigen::Success) throw DomainError("solve_box_qp: Hessian is not positive semidefinite");
  }
  (void)n;
  return llt;
}

// Solve the equality-constrained subproblem implied by an active-set guess.
// Returns false when the guess fails primal or dual feasibility.
bool polish(const QpProblem& p, const Vector& z, const Vector& y, Vector& x_out, Vector& y_out) {
  const Eigen::Index n = p.g.size();
  const double tol = 1e-9;
  std::vector<int> state(static_cast<std::size_t>(n), 0);  // -1 lower, +1 upper, 0 free
  for (Eigen::Index i = 0; i < n; ++i) {
    if (std::isfinite(p.lb(i)) && z(i) - p.lb(i) < -y(i)) state[i] = -1;
    else if (std::isfinite(p.ub(i)) && p.ub(i) - z(i) < y(i)) state[i] = 1;
  }
  for (int attempt = 0; attempt < 3; ++attempt) {
    Vector x = Vector::Zero(n);
    std::vector<Eigen::Index> free;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (state[i] < 0) x(i) = p.lb(i);
      else if (state[i] > 0) x(i) = p.ub(i);
      else free.push_back(i);
    }
    if (!free.empty()) {
      const auto nf = static_cast<Eigen::Index>(free.size());
      Matrix hff(nf, nf);
      Vector rhs(nf);
      for (Eigen::Index a = 0; a < nf; ++a) {
        double r = -p.g(free[a]);
        for (Eigen::Index j = 0; j < n; ++j) {
          if (state[j] != 0) r -= p.h(free[a], j) * x(j);
        }
        rhs(a) = r;
        for (Eigen::Index b = 0; b < nf; ++b) hff(a, b) = p.h(free[a], free[b]);
      }
      Eigen::LDLT<Matrix> ldlt(hff);
      if (ldlt.info() != Eigen::Success) return false;
      const Vector xf = ldlt.solve(rhs);
      if (!xf.allFinite()) return false;
      for (Eigen::Index a = 0; a < nf; ++a) x(free[a]) = xf(a);
    }
    Vector yy = -(p.h * x + p.g);
    const double scale = 1.0 + inf_norm(p.g) + inf_norm(p.h * x);
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (state[i] == 0) {
        yy(i) = 0.0;
        if (x(i) < p.lb(i) - tol * (1 + std::abs(p.lb(i)))) {
          state[i] = -1;
          changed = true;
        } else if (x(i) > p.ub(i) + tol * (1 + std::abs(p.ub(i)))) {
          state[i] = 1;
          changed = true;
        }
      } else if (state[i] * yy(i) < -tol * scale) {
        state[i] = 0;  // multiplier has the wrong sign: release the bound
        changed = true;
      }
    }
    if (!changed) {
      x_out = x;
      y_out = yy;
      return true;
    }
  }
  return false;
}

}  // namespace

QpSolution solve_box_qp(const QpProblem& prob, const QpSolution* warm, const QpSettings& s) {
  const Eigen::Index n = prob.g.size();
  if (prob.h.rows() != n || prob.h.cols() != n || prob.lb.size() != n || prob.ub.size() != n) {
    throw DimensionError("solve_box_qp: inconsistent problem dimensions");
  }
  QpProblem p = prob;
  p.h = 0.5 * (prob.h + prob.h.transpose());

  QpSolution sol;
  sol.x = Vector::Zero(n);
  sol.y = Vector::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(p.lb(i) <= p.ub(i))) {
      sol.status = QpStatus::InfeasibleBox;
      sol.primal_residual = std::numeric_limits<double>::infinity();
      return sol;
    }
  }
  if (n == 0) return sol;

  auto project = [&](const Vector& v) { return Vector(v.cwiseMax(p.lb).cwiseMin(p.ub)); };
  Vector x = Vector::Zero(n), y = Vector::Zero(n);
  if (warm != nullptr && warm->x.size() == n) {
    x = warm->x;
    if (warm->y.size() == n) y = warm->y;
  }
  Vector z = project(x);

  double rho = s.rho;
  auto llt = factor(p.h, s.sigma + rho);
  Vector best_x = z, best_y = y;
  double best_score = std::numeric_limits<double>::infinity();
  bool converged = false;
  int it = 0;
  double rp = 0, rd = 0;

  for (it = 1; it <= s.max_iter; ++it) {
    const Vector xt = llt.solve(s.sigma * x - p.g + rho * z - y);
    const Vector zt = xt;
    x = s.alpha * xt + (1.0 - s.alpha) * x;
    const Vector zr = s.alpha * zt + (1.0 - s.alpha) * z;
    const Vector z_new = project(zr + y / rho);
    y += rho * (zr - z_new);
    z = z_new;

    const Vector hx = p.h * x;
    rp = inf_norm(x - z);
    rd = inf_norm(hx + p.g + y);
    const double eps_p = s.eps_abs + s.eps_rel * std::max(inf_norm(x), inf_norm(z));
    const double eps_d = s.eps_abs + s.eps_rel * std::max({inf_norm(hx), inf_norm(y), inf_norm(p.g)});
    const double score = std::max(rp / eps_p, rd / eps_d);
    if (score < best_score) {
      best_score = score;
      best_x = z;
      best_y = y;
    }
    if (rp <= eps_p && rd <= eps_d) {
      converged = true;
      break;
    }
    if (s.adapt_interval > 0 && it % s.adapt_interval == 0) {
      const double np = rp / std::max(std::max(inf_norm(x), inf_norm(z)), 1e-30);
      const double nd = rd / std::max(std::max({inf_norm(hx), inf_norm(y), inf_norm(p.g)}), 1e-30);
      double rho_new = rho * std::sqrt(np / std::max(nd, 1e-30));
      rho_new = std::clamp(rho_new, 1e-6, 1e6);
      if (rho_new > 5.0 * rho || rho_new < 0.2 * rho) {
        rho = rho_new;
        llt = factor(p.h, s.sigma + rho);
      }
    }
  }

  sol.iterations = std::min(it, s.max_iter);
  sol.status = converged ? QpStatus::Solved : QpStatus::MaxIter;
  sol.x = converged ? z : best_x;
  sol.y = converged ? y : best_y;

  if (s.polish) {
    Vector xp, yp;
    if (polish(p, sol.x, sol.y, xp, yp)) {
      const auto before = kkt_residual(p, sol.x, sol.y);
      const auto after = kkt_residual(p, xp, yp);
      if (std::max(after.primal, after.dual) <= std::max(before.primal, before.dual) + 1e-12) {
        sol.x = xp;
        sol.y = yp;
        sol.polished = true;
      }
    }
  }
  const auto r = kkt_residual(p, sol.x, sol.y);
  sol.primal_residual = std::max(r.primal, inf_norm(sol.x - project(sol.x)));
  sol.dual_residual = r.dual;
  if (sol.polished && sol.status == QpStatus::MaxIter &&
      std::max(sol.primal_residual, sol.dual_residual) <= s.eps_abs) {
    sol.status = QpStatus::Solved;
  }
  sol.objective = objective(p, sol.x);
  return sol;
}

}  // namespace bmk::qp
