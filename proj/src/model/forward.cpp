#include <cmath>
#include <stdexcept>

#include "bmk/model/model.hpp"
#include "bmk/numerics/activations.hpp"
#include "bmk/numerics/expm.hpp"
#include "bmk/numerics/spectral.hpp"

namespace bmk::model {

namespace {

Matrix affine(const Matrix& w, const Matrix& b, const Matrix& x) {
  return (w * x).colwise() + b.col(0);
}

Matrix tanh_of(const Matrix& m) { return m.array().tanh().matrix(); }

Matrix head_forward(const Head& h, const Matrix& x) {
  return affine(h.w2, h.b2, tanh_of(affine(h.w1, h.b1, x)));
}

void require_window(const Hyper& h, const Matrix& x, const Matrix& u) {
  const int len = h.lookback + h.horizon;
  if (x.rows() < len || u.rows() < len || x.cols() != h.state_dim || u.cols() != h.control_dim) {
    throw DimensionError("window: expected " + std::to_string(len) + " rows of (state, control)");
  }
}

}  // namespace

Matrix encode_rows(const ModelParams& p, const Matrix& rows) {
  if (rows.cols() != p.hyper.state_dim) throw DimensionError("encode: state dimension mismatch");
  return affine(p.enc_w2, p.enc_b2, tanh_of(affine(p.enc_w1, p.enc_b1, rows.transpose())));
}

Vector encode(const ModelParams& p, const Vector& x) {
  return encode_rows(p, x.transpose()).col(0);
}

OperatorBundle generate_operators(const ModelParams& p, const Matrix& hist_x, const Matrix& hist_u) {
  const Hyper& h = p.hyper;
  const int lb = h.lookback;
  if (hist_x.rows() < lb || hist_u.rows() < lb) {
    throw std::invalid_argument("generate_operators: history shorter than lookback " + std::to_string(lb));
  }
  if (hist_u.cols() != h.control_dim) throw DimensionError("generate_operators: control dimension mismatch");
  const Matrix xs = hist_x.bottomRows(lb);
  const Matrix us = hist_u.bottomRows(lb);

  OperatorBundle b;
  b.u_mean = us.colwise().mean().transpose();
  const Matrix centered = us.rowwise() - b.u_mean.transpose();
  b.u_std = (centered.array().square().colwise().mean().transpose() + h.inst_eps).sqrt().matrix();

  Matrix seq(h.channels(), lb);
  seq.topRows(h.latent_dim) = encode_rows(p, xs);
  seq.bottomRows(h.control_dim) =
      (centered.array().rowwise() / b.u_std.transpose().array()).matrix().transpose();

  const int len = h.conv_length();
  Matrix conv(h.channels(), len);
  for (int t = 0; t < len; ++t) {
    for (int i = 0; i < h.channels(); ++i) {
      double acc = p.conv_b(i, 0);
      for (int k = 0; k < h.conv_kernel; ++k) acc += p.conv_w(i, k) * seq(i, t + k);
      conv(i, t) = acc;
    }
  }
  const Matrix flat = Eigen::Map<const Matrix>(conv.data(), conv.size(), 1);
  const Matrix shared = tanh_of(affine(p.shared_w, p.shared_b, flat));

  b.delta = head_forward(p.delta, shared).col(0).unaryExpr([](double v) { return softplus(v); });
  const Matrix bc = head_forward(p.bc, shared);
  b.bc = Eigen::Map<const Matrix>(bc.data(), h.latent_dim, h.control_dim);
  const Matrix c = head_forward(p.dec, shared);
  b.c = Eigen::Map<const Matrix>(c.data(), h.state_dim, h.latent_dim);
  b.a_act = p.a_pre.col(0).unaryExpr([](double v) { return negative_celu(v); });
  return b;
}

Matrix coupling_generator(const std::vector<Matrix>& g, const Vector& u, double period) {
  if (g.empty()) return Matrix();
  if (static_cast<Eigen::Index>(g.size()) != u.size()) throw DimensionError("coupling: control dimension mismatch");
  Matrix s = Matrix::Zero(g[0].rows(), g[0].cols());
  for (std::size_t j = 0; j < g.size(); ++j) s += (u(static_cast<Eigen::Index>(j)) * period) * g[j];
  return s;
}

DiscreteOperators discretize_lie_trotter(const OperatorBundle& b, const std::vector<Matrix>& g,
                                         const Vector& u, double period) {
  DiscreteOperators d;
  d.e_d = b.a_act.cwiseProduct(b.delta).array().exp().matrix();
  d.b_diag = phi1(b.a_act, b.delta).asDiagonal() * b.bc;
  const Matrix diag = d.e_d.asDiagonal();
  if (g.empty()) {
    d.e_p = Matrix::Identity(d.e_d.size(), d.e_d.size());
    d.a = diag;
    d.b = d.b_diag;
  } else {
    d.e_p = matrix_exp(coupling_generator(g, u, period));
    d.a = d.e_p * diag;
    d.b = d.e_p * d.b_diag;
  }
  return d;
}

Rollout rollout(const Vector& z0, const Matrix& u_seq, const OperatorBundle& b,
                const std::vector<Matrix>& g, double period) {
  const Eigen::Index n = u_seq.cols();
  Rollout r;
  r.z.resize(z0.size(), n + 1);
  r.z.col(0) = z0;
  for (Eigen::Index k = 0; k < n; ++k) {
    const Vector u = u_seq.col(k);
    const auto d = discretize_lie_trotter(b, g, u, period);
    r.z.col(k + 1) = d.a * r.z.col(k) + d.b * u;
  }
  r.x = b.c * r.z;
  return r;
}

double spectral_penalty(const Matrix& a, double margin) { return bmk::spectral_penalty(a, margin).value; }

WindowEval evaluate_window(const ModelParams& p, const Matrix& x, const Matrix& u, bool with_penalty) {
  const Hyper& h = p.hyper;
  require_window(h, x, u);
  const int lb = h.lookback, hz = h.horizon;
  const OperatorBundle b = generate_operators(p, x.topRows(lb), u.topRows(lb));
  const auto g = coupling_generators(p);
  const Vector z0 = encode(p, x.row(lb).transpose());

  Matrix useq(h.control_dim, hz - 1);
  for (int k = 0; k < hz - 1; ++k) useq.col(k) = b.to_model(u.row(lb + k).transpose());

  WindowEval ev;
  const bool penalize = with_penalty && h.lambda_s != 0.0;
  Vector z = z0;
  ev.predicted.resize(hz, h.state_dim);
  for (int k = 0; k < hz; ++k) {
    const Vector xh = b.c * z;
    ev.predicted.row(k) = xh.transpose();
    ev.prediction += (xh - x.row(lb + k).transpose()).squaredNorm();
    if (k == hz - 1) break;
    const auto d = discretize_lie_trotter(b, g, useq.col(k), h.coupling_period);
    if (penalize) ev.penalty += spectral_penalty(d.a, h.margin);
    z = d.a * z + d.b * useq.col(k);
  }
  ev.prediction /= hz;
  ev.penalty = hz > 1 ? ev.penalty / (hz - 1) : 0.0;
  ev.loss = ev.prediction + (penalize ? h.lambda_s * ev.penalty : 0.0);
  return ev;
}

}  // namespace bmk::model
