#pragma once

#include <vector>

#include "bmk/model/params.hpp"
#include "bmk/numerics/tape.hpp"

namespace bmk::model {

/// History-conditioned operators, frozen over one prediction horizon.
struct OperatorBundle {
  Vector a_act;  // activated diagonal eigenvalues, <= 1
  Vector delta;  // per-mode timescales, > 0
  Matrix bc;     // d_z x m continuous input matrix
  Matrix c;      // n x d_z decoder
  Vector u_mean, u_std;  // instance statistics of the history controls

  /// Dataset-normalized control -> model control units.
  Vector to_model(const Vector& u_ds) const { return (u_ds - u_mean).cwiseQuotient(u_std); }
  Vector from_model(const Vector& u_m) const { return u_m.cwiseProduct(u_std) + u_mean; }
};

struct DiscreteOperators {
  Matrix a;       // E_P E_D
  Matrix b;       // E_P B_diag
  Matrix e_p;     // coupling factor exp(sum_j u_j G_j T)
  Vector e_d;     // diagonal of E_D
  Matrix b_diag;  // phi1(a, delta) .* B^(c)
};

struct Rollout {
  Matrix z;  // d_z x (N + 1)
  Matrix x;  // n x (N + 1), decoded with the bundle's C
};

/// Encoder MLP on a (dataset-normalized) state.
Vector encode(const ModelParams& p, const Vector& x);
/// Encodes every row of `rows`; returns d_z x rows.
Matrix encode_rows(const ModelParams& p, const Matrix& rows);

/// hist_x: lookback x n normalized states, hist_u: lookback x m normalized
/// controls (only the last `lookback` rows are used).
OperatorBundle generate_operators(const ModelParams& p, const Matrix& hist_x, const Matrix& hist_u);

/// sum_j u_j G_j T.
Matrix coupling_generator(const std::vector<Matrix>& g, const Vector& u, double period);

/// Lie-Trotter step operators; `u` in model units. Empty `g` is the linear model.
DiscreteOperators discretize_lie_trotter(const OperatorBundle& b, const std::vector<Matrix>& g,
                                         const Vector& u, double period);

/// z_{k+1} = A(u_k) z_k + B(u_k) u_k with the bundle held fixed; u_seq is m x N.
Rollout rollout(const Vector& z0, const Matrix& u_seq, const OperatorBundle& b,
                const std::vector<Matrix>& g, double period);

/// sum_j max(0, |lambda_j(A)| - 1 + margin).
double spectral_penalty(const Matrix& a, double margin);

struct WindowEval {
  double loss = 0.0;        // prediction term + lambda_s * mean penalty
  double prediction = 0.0;  // (1/H) sum_k ||x_hat_k - x_k||^2
  double penalty = 0.0;     // mean penalty over the H - 1 transitions
  Matrix predicted;         // H x n decoded predictions (normalized units)
};

/// x: (lookback + horizon) x n normalized states, u: matching normalized
/// controls. Row `lookback` seeds the latent state; predictions cover rows
/// lookback .. lookback + horizon - 1.
WindowEval evaluate_window(const ModelParams& p, const Matrix& x, const Matrix& u, bool with_penalty);

/// Same loss recorded on a tape; `vars` are the parameters in visit order.
ad::Var tape_window_loss(ad::Tape& tape, const std::vector<ad::Var>& vars, const Hyper& h,
                         const Matrix& x, const Matrix& u, bool with_penalty);

/// Registers every tensor of p on the tape with its visit index as key.
std::vector<ad::Var> register_params(ad::Tape& tape, const ModelParams& p);

struct Sample {
  Matrix x;  // normalized states
  Matrix u;  // normalized controls
};

struct LossGrad {
  double loss = 0.0;
  ParamVector grad;
};

/// Mean window loss over the batch and its gradient.
LossGrad batch_loss_grad(const ModelParams& p, const std::vector<const Sample*>& batch, bool with_penalty = true);

}  // namespace bmk::model
