#include "bmk/numerics/tape.hpp"

#include <cmath>

#include "bmk/numerics/activations.hpp"
#include "bmk/numerics/expm.hpp"
#include "bmk/numerics/spectral.hpp"

namespace bmk::ad {

const Matrix& Var::value() const { return tape_->value(id_); }

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{"constant", std::move(value), {}, {}, -1, false});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::param(Matrix value, int key) {
  nodes_.push_back(Node{"param", std::move(value), {}, {}, key, true});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::record(std::string op, Matrix value, std::vector<int> parents, Adjoint adjoint) {
  bool rg = false;
  for (int p : parents) rg = rg || nodes_[p].requires_grad;
  nodes_.push_back(Node{std::move(op), std::move(value), std::move(parents),
                        std::move(adjoint), -1, rg});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void Tape::accumulate(int id, const Matrix& contribution) {
  if (!nodes_[id].requires_grad) return;
  Matrix& g = grads_[id];
  if (g.size() == 0) {
    g = contribution;
  } else {
    g += contribution;
  }
}

Gradients Tape::backward(const Var& out, double seed) {
  if (out.tape() != this) throw std::invalid_argument("backward: variable from another tape");
  if (out.rows() != 1 || out.cols() != 1) {
    throw DimensionError("backward: output must be a scalar");
  }
  grads_.assign(nodes_.size(), Matrix());
  grads_[out.id()] = Matrix::Constant(1, 1, seed);

  Gradients result;
  for (int id = out.id(); id >= 0; --id) {
    Node& node = nodes_[id];
    if (!node.requires_grad || grads_[id].size() == 0) continue;
    if (node.key >= 0) {
      auto it = result.find(node.key);
      if (it == result.end()) {
        result.emplace(node.key, grads_[id]);
      } else {
        it->second += grads_[id];
      }
      continue;
    }
    if (node.parents.empty()) continue;
    if (!node.adjoint) {
      throw UnsupportedOpError("backward: no adjoint registered for op '" + node.op + "'");
    }
    node.adjoint(*this, grads_[id]);
  }
  grads_.clear();
  return result;
}

void Tape::clear() {
  nodes_.clear();
  grads_.clear();
}

namespace {

Tape& same_tape(const Var& a, const Var& b) {
  if (a.tape() != b.tape() || a.tape() == nullptr) {
    throw std::invalid_argument("ad: operands recorded on different tapes");
  }
  return *a.tape();
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch");
  }
}

}  // namespace

Var add(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  require_same_shape(a, b, "add");
  const int ia = a.id(), ib = b.id();
  return t.record("add", a.value() + b.value(), {ia, ib}, [ia, ib](Tape& tp, const Matrix& g) {
    tp.accumulate(ia, g);
    tp.accumulate(ib, g);
  });
}

Var sub(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  require_same_shape(a, b, "sub");
  const int ia = a.id(), ib = b.id();
  return t.record("sub", a.value() - b.value(), {ia, ib}, [ia, ib](Tape& tp, const Matrix& g) {
    tp.accumulate(ia, g);
    tp.accumulate(ib, -g);
  });
}

Var matmul(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  if (a.cols() != b.rows()) throw DimensionError("matmul: inner dimensions differ");
  const int ia = a.id(), ib = b.id();
  return t.record("matmul", a.value() * b.value(), {ia, ib}, [ia, ib](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(ia)) tp.accumulate(ia, g * tp.value(ib).transpose());
    if (tp.requires_grad(ib)) tp.accumulate(ib, tp.value(ia).transpose() * g);
  });
}

Var hadamard(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  require_same_shape(a, b, "hadamard");
  const int ia = a.id(), ib = b.id();
  return t.record("hadamard", a.value().cwiseProduct(b.value()), {ia, ib},
                  [ia, ib](Tape& tp, const Matrix& g) {
                    if (tp.requires_grad(ia)) tp.accumulate(ia, g.cwiseProduct(tp.value(ib)));
                    if (tp.requires_grad(ib)) tp.accumulate(ib, g.cwiseProduct(tp.value(ia)));
                  });
}

Var scale(const Var& a, double s) {
  const int ia = a.id();
  return a.tape()->record("scale", a.value() * s, {ia},
                          [ia, s](Tape& tp, const Matrix& g) { tp.accumulate(ia, g * s); });
}

Var add_colwise(const Var& a, const Var& bias) {
  Tape& t = same_tape(a, bias);
  if (bias.cols() != 1 || bias.rows() != a.rows()) {
    throw DimensionError("add_colwise: bias must be a column matching rows");
  }
  const int ia = a.id(), ib = bias.id();
  Matrix v = a.value().colwise() + bias.value().col(0);
  return t.record("add_colwise", std::move(v), {ia, ib}, [ia, ib](Tape& tp, const Matrix& g) {
    tp.accumulate(ia, g);
    if (tp.requires_grad(ib)) tp.accumulate(ib, g.rowwise().sum());
  });
}

Var transpose(const Var& a) {
  const int ia = a.id();
  return a.tape()->record("transpose", a.value().transpose(), {ia},
                          [ia](Tape& tp, const Matrix& g) { tp.accumulate(ia, g.transpose()); });
}

Var reshape(const Var& a, Eigen::Index rows, Eigen::Index cols) {
  if (rows * cols != a.value().size()) throw DimensionError("reshape: size mismatch");
  const int ia = a.id();
  const Eigen::Index r0 = a.rows(), c0 = a.cols();
  Matrix v = Eigen::Map<const Matrix>(a.value().data(), rows, cols);
  return a.tape()->record("reshape", std::move(v), {ia}, [ia, r0, c0](Tape& tp, const Matrix& g) {
    tp.accumulate(ia, Eigen::Map<const Matrix>(g.data(), r0, c0));
  });
}

Var block(const Var& a, Eigen::Index r0, Eigen::Index c0, Eigen::Index nr, Eigen::Index nc) {
  if (r0 < 0 || c0 < 0 || r0 + nr > a.rows() || c0 + nc > a.cols()) {
    throw DimensionError("block: out of range");
  }
  const int ia = a.id();
  const Eigen::Index ar = a.rows(), ac = a.cols();
  return a.tape()->record("block", a.value().block(r0, c0, nr, nc), {ia},
                          [=](Tape& tp, const Matrix& g) {
                            Matrix full = Matrix::Zero(ar, ac);
                            full.block(r0, c0, nr, nc) = g;
                            tp.accumulate(ia, full);
                          });
}

Var vstack(const Var& top, const Var& bottom) {
  Tape& t = same_tape(top, bottom);
  if (top.cols() != bottom.cols()) throw DimensionError("vstack: column mismatch");
  const int it = top.id(), ib = bottom.id();
  const Eigen::Index rt = top.rows(), rb = bottom.rows();
  Matrix v(rt + rb, top.cols());
  v << top.value(), bottom.value();
  return t.record("vstack", std::move(v), {it, ib}, [=](Tape& tp, const Matrix& g) {
    tp.accumulate(it, g.topRows(rt));
    tp.accumulate(ib, g.bottomRows(rb));
  });
}

Var diag(const Var& v) {
  if (v.cols() != 1) throw DimensionError("diag: expected a column vector");
  const int iv = v.id();
  Matrix d = v.value().col(0).asDiagonal();
  return v.tape()->record("diag", std::move(d), {iv}, [iv](Tape& tp, const Matrix& g) {
    tp.accumulate(iv, g.diagonal());
  });
}

Var tanh(const Var& a) {
  const int ia = a.id();
  Matrix v = a.value().array().tanh().matrix();
  Tape* t = a.tape();
  const int self = static_cast<int>(t->size());
  return t->record("tanh", std::move(v), {ia}, [ia, self](Tape& tp, const Matrix& g) {
    const Matrix& y = tp.value(self);
    tp.accumulate(ia, (g.array() * (1.0 - y.array().square())).matrix());
  });
}

Var softplus(const Var& a) {
  const int ia = a.id();
  Matrix v = a.value().unaryExpr([](double x) { return bmk::softplus(x); });
  return a.tape()->record("softplus", std::move(v), {ia}, [ia](Tape& tp, const Matrix& g) {
    const Matrix s = tp.value(ia).unaryExpr([](double x) { return bmk::sigmoid(x); });
    tp.accumulate(ia, g.cwiseProduct(s));
  });
}

Var negative_celu(const Var& a) {
  const int ia = a.id();
  Matrix v = a.value().unaryExpr([](double x) { return bmk::negative_celu(x); });
  return a.tape()->record("negative_celu", std::move(v), {ia}, [ia](Tape& tp, const Matrix& g) {
    const Matrix d = tp.value(ia).unaryExpr([](double x) { return bmk::negative_celu_grad(x); });
    tp.accumulate(ia, g.cwiseProduct(d));
  });
}

Var exp(const Var& a) {
  const int ia = a.id();
  Tape* t = a.tape();
  const int self = static_cast<int>(t->size());
  return t->record("exp", a.value().array().exp().matrix(), {ia},
                   [ia, self](Tape& tp, const Matrix& g) {
                     tp.accumulate(ia, g.cwiseProduct(tp.value(self)));
                   });
}

Var phi1(const Var& a, const Var& delta) {
  Tape& t = same_tape(a, delta);
  require_same_shape(a, delta, "phi1");
  const int ia = a.id(), id = delta.id();
  Matrix v = a.value().binaryExpr(delta.value(), [](double x, double d) { return bmk::phi1(x, d); });
  return t.record("phi1", std::move(v), {ia, id}, [ia, id](Tape& tp, const Matrix& g) {
    const Matrix& av = tp.value(ia);
    const Matrix& dv = tp.value(id);
    if (tp.requires_grad(ia)) {
      tp.accumulate(ia, g.cwiseProduct(av.binaryExpr(dv, [](double x, double d) {
        return phi1_da(x, d);
      })));
    }
    if (tp.requires_grad(id)) {
      tp.accumulate(id, g.cwiseProduct(av.binaryExpr(dv, [](double x, double d) {
        return phi1_ddelta(x, d);
      })));
    }
  });
}

Var sum(const Var& a) {
  const int ia = a.id();
  const Eigen::Index r = a.rows(), c = a.cols();
  return a.tape()->record("sum", Matrix::Constant(1, 1, a.value().sum()), {ia},
                          [ia, r, c](Tape& tp, const Matrix& g) {
                            tp.accumulate(ia, Matrix::Constant(r, c, g(0, 0)));
                          });
}

Var sum_squares(const Var& a) {
  const int ia = a.id();
  return a.tape()->record("sum_squares", Matrix::Constant(1, 1, a.value().squaredNorm()), {ia},
                          [ia](Tape& tp, const Matrix& g) {
                            tp.accumulate(ia, 2.0 * g(0, 0) * tp.value(ia));
                          });
}

Var matrix_exp(const Var& a) {
  const int ia = a.id();
  return a.tape()->record("matrix_exp", bmk::matrix_exp(a.value()), {ia},
                          [ia](Tape& tp, const Matrix& g) {
                            // <G, L(A, E)> = <L(A^T, G), E>
                            const Matrix at = tp.value(ia).transpose();
                            tp.accumulate(ia, matrix_exp_frechet(at, g).second);
                          });
}

Var spectral_penalty(const Var& a, double margin) {
  const int ia = a.id();
  SpectralPenalty p = bmk::spectral_penalty(a.value(), margin);
  Matrix grad = std::move(p.grad);
  return a.tape()->record("spectral_penalty", Matrix::Constant(1, 1, p.value), {ia},
                          [ia, grad = std::move(grad)](Tape& tp, const Matrix& g) {
                            tp.accumulate(ia, g(0, 0) * grad);
                          });
}

Var conv1d_depthwise(const Var& x, const Var& w, const Var& b) {
  Tape& t = same_tape(x, w);
  const Eigen::Index c = x.rows(), len = x.cols(), k = w.cols();
  if (w.rows() != c || b.rows() != c || b.cols() != 1 || b.tape() != &t) {
    throw DimensionError("conv1d_depthwise: channel mismatch");
  }
  if (k > len) throw DimensionError("conv1d_depthwise: kernel longer than sequence");
  const Eigen::Index out_len = len - k + 1;
  const Matrix& xv = x.value();
  const Matrix& wv = w.value();
  Matrix y = b.value().col(0).replicate(1, out_len);
  for (Eigen::Index j = 0; j < k; ++j) {
    y += (xv.middleCols(j, out_len).array().colwise() * wv.col(j).array()).matrix();
  }
  const int ix = x.id(), iw = w.id(), ib = b.id();
  return t.record("conv1d_depthwise", std::move(y), {ix, iw, ib},
                  [=](Tape& tp, const Matrix& g) {
                    const Matrix& xv2 = tp.value(ix);
                    const Matrix& wv2 = tp.value(iw);
                    if (tp.requires_grad(ix)) {
                      Matrix gx = Matrix::Zero(c, len);
                      for (Eigen::Index j = 0; j < k; ++j) {
                        gx.middleCols(j, out_len) +=
                            (g.array().colwise() * wv2.col(j).array()).matrix();
                      }
                      tp.accumulate(ix, gx);
                    }
                    if (tp.requires_grad(iw)) {
                      Matrix gw(c, k);
                      for (Eigen::Index j = 0; j < k; ++j) {
                        gw.col(j) = g.cwiseProduct(xv2.middleCols(j, out_len)).rowwise().sum();
                      }
                      tp.accumulate(iw, gw);
                    }
                    if (tp.requires_grad(ib)) tp.accumulate(ib, g.rowwise().sum());
                  });
}

}  // namespace bmk::ad
