#include "bmk/model/model.hpp"

namespace bmk::model {

using ad::Var;

std::vector<Var> register_params(ad::Tape& tape, const ModelParams& p) {
  std::vector<Var> vars;
  p.visit([&](const std::string&, const Matrix& m) {
    vars.push_back(tape.param(m, static_cast<int>(vars.size())));
  });
  return vars;
}

namespace {

// Indices into the visit order.
enum Slot {
  kEncW1, kEncB1, kEncW2, kEncB2, kAPre, kConvW, kConvB, kSharedW, kSharedB,
  kDelta, kBc = kDelta + 4, kDec = kBc + 4, kCoupling = kDec + 4
};

Var affine(const Var& w, const Var& b, const Var& x) { return ad::add_colwise(w * x, b); }

Var head(const std::vector<Var>& v, int slot, const Var& x) {
  return affine(v[slot + 2], v[slot + 3], ad::tanh(affine(v[slot], v[slot + 1], x)));
}

}  // namespace

Var tape_window_loss(ad::Tape& tape, const std::vector<Var>& v, const Hyper& h, const Matrix& x,
                     const Matrix& u, bool with_penalty) {
  const int lb = h.lookback, hz = h.horizon, dz = h.latent_dim, m = h.control_dim;
  if (x.rows() < lb + hz || u.rows() < lb + hz) throw DimensionError("tape_window_loss: short window");

  // encode the lookback rows and the seed row in one pass
  const Var xin = tape.constant(x.topRows(lb + 1).transpose());
  const Var z_all = affine(v[kEncW2], v[kEncB2], ad::tanh(affine(v[kEncW1], v[kEncB1], xin)));
  const Var z_hist = ad::block(z_all, 0, 0, dz, lb);
  const Var z0 = ad::block(z_all, 0, lb, dz, 1);

  const Matrix us = u.topRows(lb);
  const Vector mean = us.colwise().mean().transpose();
  const Matrix centered = us.rowwise() - mean.transpose();
  const Vector sd = (centered.array().square().colwise().mean().transpose() + h.inst_eps).sqrt().matrix();
  const Matrix u_hist = (centered.array().rowwise() / sd.transpose().array()).matrix().transpose();

  const Var seq = ad::vstack(z_hist, tape.constant(u_hist));
  const Var conv = ad::conv1d_depthwise(seq, v[kConvW], v[kConvB]);
  const Var flat = ad::reshape(conv, conv.rows() * conv.cols(), 1);
  const Var shared = ad::tanh(affine(v[kSharedW], v[kSharedB], flat));

  const Var delta = ad::softplus(head(v, kDelta, shared));
  const Var bc = ad::reshape(head(v, kBc, shared), dz, m);
  const Var c = ad::reshape(head(v, kDec, shared), h.state_dim, dz);
  const Var a = ad::negative_celu(v[kAPre]);
  const Var e_d = ad::exp(ad::hadamard(a, delta));
  const Var diag_e = ad::diag(e_d);
  const Var b_diag = ad::diag(ad::phi1(a, delta)) * bc;

  std::vector<Var> g;
  if (h.bilinear()) {
    for (int j = 0; j < m; ++j) {
      g.push_back(v[kCoupling + 2 * j] * ad::transpose(v[kCoupling + 2 * j + 1]));
    }
  }
  const bool penalize = with_penalty && h.lambda_s != 0.0;

  Var z = z0;
  Var pred_sum, pen_sum;
  bool have_pen = false;
  for (int k = 0; k < hz; ++k) {
    const Var err = c * z - tape.constant(x.row(lb + k).transpose());
    pred_sum = k == 0 ? ad::sum_squares(err) : pred_sum + ad::sum_squares(err);
    if (k == hz - 1) break;
    const Vector uk = (u.row(lb + k).transpose() - mean).cwiseQuotient(sd);
    const Var uvar = tape.constant(uk);
    Var a_disc = diag_e, b_disc = b_diag;
    if (!g.empty()) {
      Var gen = ad::scale(g[0], uk(0) * h.coupling_period);
      for (int j = 1; j < m; ++j) gen = gen + ad::scale(g[j], uk(j) * h.coupling_period);
      const Var e_p = ad::matrix_exp(gen);
      a_disc = e_p * diag_e;
      b_disc = e_p * b_diag;
    }
    if (penalize) {
      const Var pen = ad::spectral_penalty(a_disc, h.margin);
      pen_sum = have_pen ? pen_sum + pen : pen;
      have_pen = true;
    }
    z = a_disc * z + b_disc * uvar;
  }
  Var loss = ad::scale(pred_sum, 1.0 / hz);
  if (have_pen) loss = loss + ad::scale(pen_sum, h.lambda_s / (hz - 1));
  return loss;
}

LossGrad batch_loss_grad(const ModelParams& p, const std::vector<const Sample*>& batch, bool with_penalty) {
  if (batch.empty()) throw std::invalid_argument("batch_loss_grad: empty batch");
  ad::Tape tape;
  const auto vars = register_params(tape, p);
  Var total;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Var l = tape_window_loss(tape, vars, p.hyper, batch[i]->x, batch[i]->u, with_penalty);
    total = i == 0 ? l : total + l;
  }
  total = ad::scale(total, 1.0 / static_cast<double>(batch.size()));
  LossGrad out;
  out.loss = total.scalar();
  const auto grads = tape.backward(total);
  out.grad = zeros_like(p);
  for (const auto& [key, g] : grads) out.grad[static_cast<std::size_t>(key)] = g;
  return out;
}

}  // namespace bmk::model
