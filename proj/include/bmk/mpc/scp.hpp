#pragma once

#include <vector>

#include "bmk/model/model.hpp"
#include "bmk/qp/box_qp.hpp"

namespace bmk::mpc {

/// One receding-horizon problem with the operator bundle frozen. Everything
/// is expressed in model units: normalized states, instance-normalized controls.
struct HorizonProblem {
  model::OperatorBundle bundle;
  std::vector<Matrix> g;  // coupling generators, empty for the linear model
  double period = 1.0;
  int horizon = 30;
  Vector z0;
  Vector u_prev;  // previously applied control, fixed data of the first increment term
  Matrix q, r, p;  // stage, increment and terminal weights
  Vector x_ref;
  Vector u_lb, u_ub;

  int control_dim() const { return static_cast<int>(u_lb.size()); }
  int latent_dim() const { return static_cast<int>(z0.size()); }
};

/// Latent rollout z_0..z_H of the control sequence u (m x H).
Matrix rollout_latent(const HorizonProblem& hp, const Matrix& u);

/// J = sum_{k=1}^{H-1} |C z_k - x_ref|_Q^2 + sum_{k=0}^{H-1} |u_k - u_{k-1}|_R^2
///     + |C z_H - x_ref|_P^2 with u_{-1} = u_prev.
double horizon_cost(const HorizonProblem& hp, const Matrix& u, Matrix* z_out = nullptr);

struct Linearization {
  std::vector<Matrix> a;  // d_z x d_z per stage
  std::vector<Matrix> b;  // d_z x m per stage
};

/// Exact Jacobians of the Lie-Trotter step along (z_bar, u_bar).
Linearization linearize(const HorizonProblem& hp, const Matrix& z_bar, const Matrix& u_bar);

/// Dense box QP in the stacked increments du (index k*m + j). Box is the
/// intersection of the control bounds shifted by u_bar and |du| <= eps.
qp::QpProblem condense(const HorizonProblem& hp, const Linearization& lin, const Matrix& z_bar,
                       const Matrix& u_bar, double eps);

struct ScpIteration {
  double eps = 0.0;
  double cost_before = 0.0;
  double cost_candidate = 0.0;
  double predicted = 0.0;  // linearized objective at the QP optimum
  bool accepted = false;
  int qp_iterations = 0;
  qp::QpStatus qp_status = qp::QpStatus::Solved;
  double step_inf_norm = 0.0;
};

struct Plan {
  Matrix u;     // m x H, model units
  Matrix z;     // d_z x (H + 1), exact rollout of u
  double cost = 0.0;
  std::vector<double> accepted_costs;  // J after each accepted iterate, starting with J(u_init)
  std::vector<ScpIteration> iterations;
  qp::QpSolution last_qp;
  bool qp_flagged = false;  // some QP hit its iteration cap
};

/// Algorithm: roll out the nominal, then n_scp times {linearize, condense,
/// solve warm-started, accept when J does not increase else halve eps}.
/// Stops early once eps drops below eps_min.
Plan scp_solve(const HorizonProblem& hp, const Matrix& u_init, int n_scp, double eps0,
               const qp::QpSolution* warm = nullptr, const qp::QpSettings& settings = {},
               double eps_min = 1e-9);

/// Single convex QP in absolute controls for the coupling-free model; the box
/// is the control bounds intersected with |u - u_nominal| <= eps (pass
/// infinity to drop the trust region).
Plan linear_qp_solve(const HorizonProblem& hp, const Matrix& u_nominal, double eps,
                     const qp::QpSolution* warm = nullptr, const qp::QpSettings& settings = {});

struct StabilityDiagnostics {
  double spectral_radius = 0.0;
  bool gershgorin_straddles = false;
  double max_disk_reach = 0.0;
};
StabilityDiagnostics stability_diagnostics(const Matrix& a);

}  // namespace bmk::mpc
