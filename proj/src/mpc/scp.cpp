#include "bmk/mpc/scp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "bmk/numerics/eig.hpp"
#include "bmk/numerics/expm.hpp"

namespace bmk::mpc {
namespace {

void require_plan_shape(const HorizonProblem& hp, const Matrix& u, const char* what) {
  if (u.rows() != hp.control_dim() || u.cols() != hp.horizon) {
    throw DimensionError(std::string(what) + ": control plan must be " + std::to_string(hp.control_dim()) + "x" +
                         std::to_string(hp.horizon));
  }
}

Vector flatten(const Matrix& u) { return Eigen::Map<const Vector>(u.data(), u.size()); }

Matrix unflatten(const Vector& v, int m, int h) { return Eigen::Map<const Matrix>(v.data(), m, h); }

// Quadratic part of the tracking and increment terms for a prediction that is
// affine in the decision variable: z_k = f_k + S_k v, u = v + u_offset.
struct Quadratic {
  Matrix h;
  Vector g;
};

Quadratic assemble(const HorizonProblem& hp, const std::vector<Matrix>& s, const Matrix& f, const Vector& u_offset) {
  const int m = hp.control_dim(), hz = hp.horizon, nv = m * hz;
  const Matrix& c = hp.bundle.c;
  Quadratic qd{Matrix::Zero(nv, nv), Vector::Zero(nv)};
  for (int k = 1; k <= hz; ++k) {
    const Matrix& w = k == hz ? hp.p : hp.q;
    const Matrix cs = c * s[static_cast<std::size_t>(k)];
    const Vector resid = c * f.col(k) - hp.x_ref;
    const Matrix wcs = w * cs;
    qd.h.noalias() += 2.0 * cs.transpose() * wcs;
    qd.g.noalias() += 2.0 * wcs.transpose() * resid;
  }
  // Increments: Delta = D v + (D u_offset - e_0 u_prev).
  Matrix d = Matrix::Identity(nv, nv);
  for (int i = m; i < nv; ++i) d(i, i - m) = -1.0;
  Vector c0 = d * u_offset;
  c0.head(m) -= hp.u_prev;
  Matrix rb = Matrix::Zero(nv, nv);
  for (int k = 0; k < hz; ++k) rb.block(k * m, k * m, m, m) = hp.r;
  const Matrix rd = rb * d;
  qd.h.noalias() += 2.0 * d.transpose() * rd;
  qd.g.noalias() += 2.0 * rd.transpose() * c0;
  qd.h = 0.5 * (qd.h + qd.h.transpose());
  return qd;
}

void check_box(const Vector& lb, const Vector& ub) {
  for (Eigen::Index i = 0; i < lb.size(); ++i) {
    if (!(lb(i) <= ub(i))) throw std::invalid_argument("condense: empty box (nominal outside the control bounds)");
  }
}

}  // namespace

Matrix rollout_latent(const HorizonProblem& hp, const Matrix& u) {
  require_plan_shape(hp, u, "rollout");
  return model::rollout(hp.z0, u, hp.bundle, hp.g, hp.period).z;
}

double horizon_cost(const HorizonProblem& hp, const Matrix& u, Matrix* z_out) {
  const Matrix z = rollout_latent(hp, u);
  double j = 0.0;
  for (int k = 1; k <= hp.horizon; ++k) {
    const Vector e = hp.bundle.c * z.col(k) - hp.x_ref;
    j += e.dot((k == hp.horizon ? hp.p : hp.q) * e);
  }
  Vector prev = hp.u_prev;
  for (int k = 0; k < hp.horizon; ++k) {
    const Vector du = u.col(k) - prev;
    j += du.dot(hp.r * du);
    prev = u.col(k);
  }
  if (z_out) *z_out = z;
  return j;
}

Linearization linearize(const HorizonProblem& hp, const Matrix& z_bar, const Matrix& u_bar) {
  require_plan_shape(hp, u_bar, "linearize");
  const int m = hp.control_dim();
  Linearization lin;
  lin.a.reserve(static_cast<std::size_t>(hp.horizon));
  lin.b.reserve(static_cast<std::size_t>(hp.horizon));
  for (int k = 0; k < hp.horizon; ++k) {
    const Vector u = u_bar.col(k);
    const auto d = model::discretize_lie_trotter(hp.bundle, hp.g, u, hp.period);
    lin.a.push_back(d.a);
    if (hp.g.empty()) {
      lin.b.push_back(d.b_diag);
      continue;
    }
    const Vector inner = d.e_d.cwiseProduct(z_bar.col(k)) + d.b_diag * u;
    std::vector<Matrix> dirs;
    for (const auto& g : hp.g) dirs.push_back(hp.period * g);
    const auto frechet = matrix_exp_frechet(model::coupling_generator(hp.g, u, hp.period), dirs).second;
    Matrix b(d.a.rows(), m);
    for (int j = 0; j < m; ++j) b.col(j) = frechet[static_cast<std::size_t>(j)] * inner + d.e_p * d.b_diag.col(j);
    lin.b.push_back(std::move(b));
  }
  return lin;
}

qp::QpProblem condense(const HorizonProblem& hp, const Linearization& lin, const Matrix& z_bar, const Matrix& u_bar,
                       double eps) {
  require_plan_shape(hp, u_bar, "condense");
  if (!(eps >= 0.0)) throw std::invalid_argument("condense: trust radius must be non-negative");
  const int m = hp.control_dim(), hz = hp.horizon, nz = hp.latent_dim(), nv = m * hz;
  std::vector<Matrix> s(static_cast<std::size_t>(hz + 1), Matrix::Zero(nz, nv));
  for (int k = 0; k < hz; ++k) {
    const auto ku = static_cast<std::size_t>(k);
    s[ku + 1] = lin.a[ku] * s[ku];
    s[ku + 1].block(0, k * m, nz, m) += lin.b[ku];
  }
  const Quadratic qd = assemble(hp, s, z_bar, flatten(u_bar));

  qp::QpProblem p;
  p.h = qd.h;
  p.g = qd.g;
  p.lb.resize(nv);
  p.ub.resize(nv);
  for (int k = 0; k < hz; ++k) {
    for (int j = 0; j < m; ++j) {
      const int i = k * m + j;
      p.lb(i) = std::max(hp.u_lb(j) - u_bar(j, k), -eps);
      p.ub(i) = std::min(hp.u_ub(j) - u_bar(j, k), eps);
    }
  }
  check_box(p.lb, p.ub);
  return p;
}

Plan scp_solve(const HorizonProblem& hp, const Matrix& u_init, int n_scp, double eps0, const qp::QpSolution* warm,
               const qp::QpSettings& settings, double eps_min) {
  require_plan_shape(hp, u_init, "scp");
  if (n_scp < 1) throw std::invalid_argument("scp: at least one iteration is required");
  Plan plan;
  plan.u = u_init;
  plan.cost = horizon_cost(hp, plan.u, &plan.z);
  plan.accepted_costs.push_back(plan.cost);
  double eps = eps0;
  const qp::QpSolution* seed = warm;
  for (int it = 0; it < n_scp && eps >= eps_min; ++it) {
    const Linearization lin = linearize(hp, plan.z, plan.u);
    const qp::QpProblem qp = condense(hp, lin, plan.z, plan.u, eps);
    qp::QpSolution sol = solve_box_qp(qp, seed && seed->x.size() == qp.g.size() ? seed : nullptr, settings);
    if (sol.status == qp::QpStatus::MaxIter) plan.qp_flagged = true;

    ScpIteration rec;
    rec.eps = eps;
    rec.cost_before = plan.cost;
    rec.qp_iterations = sol.iterations;
    rec.qp_status = sol.status;
    rec.step_inf_norm = sol.x.lpNorm<Eigen::Infinity>();

    const Matrix candidate = plan.u + unflatten(sol.x, hp.control_dim(), hp.horizon);
    Matrix z_candidate;
    rec.cost_candidate = horizon_cost(hp, candidate, &z_candidate);
    rec.predicted = plan.cost + sol.objective;
    if (std::isfinite(rec.cost_candidate) && rec.cost_candidate <= plan.cost) {
      rec.accepted = true;
      plan.u = candidate;
      plan.z = std::move(z_candidate);
      plan.cost = rec.cost_candidate;
      plan.accepted_costs.push_back(plan.cost);
    } else {
      eps *= 0.5;
    }
    plan.iterations.push_back(rec);
    plan.last_qp = std::move(sol);
    seed = &plan.last_qp;
  }
  return plan;
}

Plan linear_qp_solve(const HorizonProblem& hp, const Matrix& u_nominal, double eps, const qp::QpSolution* warm,
                     const qp::QpSettings& settings) {
  require_plan_shape(hp, u_nominal, "linear controller");
  if (!hp.g.empty()) throw std::invalid_argument("linear controller: model has coupling generators");
  const int m = hp.control_dim(), hz = hp.horizon, nz = hp.latent_dim(), nv = m * hz;
  const auto d = model::discretize_lie_trotter(hp.bundle, hp.g, Vector::Zero(m), hp.period);
  std::vector<Matrix> s(static_cast<std::size_t>(hz + 1), Matrix::Zero(nz, nv));
  Matrix f(nz, hz + 1);
  f.col(0) = hp.z0;
  for (int k = 0; k < hz; ++k) {
    const auto ku = static_cast<std::size_t>(k);
    s[ku + 1] = d.e_d.asDiagonal() * s[ku];
    s[ku + 1].block(0, k * m, nz, m) += d.b_diag;
    f.col(k + 1) = d.e_d.cwiseProduct(f.col(k));
  }
  const Quadratic qd = assemble(hp, s, f, Vector::Zero(nv));
  qp::QpProblem p{qd.h, qd.g, Vector(nv), Vector(nv)};
  for (int k = 0; k < hz; ++k) {
    for (int j = 0; j < m; ++j) {
      p.lb(k * m + j) = std::max(hp.u_lb(j), u_nominal(j, k) - eps);
      p.ub(k * m + j) = std::min(hp.u_ub(j), u_nominal(j, k) + eps);
    }
  }
  check_box(p.lb, p.ub);

  Plan plan;
  plan.last_qp = solve_box_qp(p, warm && warm->x.size() == nv ? warm : nullptr, settings);
  plan.qp_flagged = plan.last_qp.status == qp::QpStatus::MaxIter;
  plan.u = unflatten(plan.last_qp.x, m, hz);
  plan.cost = horizon_cost(hp, plan.u, &plan.z);
  plan.accepted_costs.push_back(plan.cost);
  ScpIteration rec;
  rec.eps = eps;
  rec.cost_candidate = plan.cost;
  rec.accepted = true;
  rec.qp_iterations = plan.last_qp.iterations;
  rec.qp_status = plan.last_qp.status;
  plan.iterations.push_back(rec);
  return plan;
}

StabilityDiagnostics stability_diagnostics(const Matrix& a) {
  require_square(a, "stability diagnostics");
  StabilityDiagnostics s;
  const auto moduli = eig_moduli(a);
  s.spectral_radius = moduli.empty() ? 0.0 : moduli.front();
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const double reach = a.row(i).cwiseAbs().sum();
    lo = std::min(lo, reach);
    hi = std::max(hi, reach);
  }
  s.max_disk_reach = hi;
  s.gershgorin_straddles = hi >= 1.0 && (lo < 1.0 || s.spectral_radius < 1.0);
  return s;
}

}  // namespace bmk::mpc
