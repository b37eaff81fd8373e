#pragma once

#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "bmk/numerics/matrix.hpp"

// Minimal reverse-mode differentiation over dense matrices. A Tape records
// primitive operations together with the forward values their adjoints need;
// backward() replays the adjoints in reverse recording order, which is a valid
// reverse topological order since nodes only reference earlier nodes.
namespace bmk::ad {

class Tape;

class UnsupportedOpError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  const Matrix& value() const;
  double scalar() const { return value()(0, 0); }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  Tape* tape() const { return tape_; }
  int id() const { return id_; }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// Parameter gradients keyed by the key passed to Tape::param.
using Gradients = std::map<int, Matrix>;

class Tape {
 public:
  /// Adjoint rule: given d(out)/d(this node), accumulate into the parents.
  using Adjoint = std::function<void(Tape&, const Matrix& grad)>;

  Var constant(Matrix value);
  Var param(Matrix value, int key);

  /// Records an operation. An empty adjoint marks an op without a registered
  /// rule; backward() raises UnsupportedOpError if gradient has to pass it.
  Var record(std::string op, Matrix value, std::vector<int> parents, Adjoint adjoint);

  /// Gradients of the scalar `out` times `seed` with respect to every param.
  Gradients backward(const Var& out, double seed = 1.0);

  /// Adds `contribution` to the running adjoint of node `id` (used by rules).
  void accumulate(int id, const Matrix& contribution);
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }

  const Matrix& value(int id) const { return nodes_[id].value; }
  std::size_t size() const { return nodes_.size(); }
  void clear();

 private:
  struct Node {
    std::string op;
    Matrix value;
    std::vector<int> parents;
    Adjoint adjoint;
    int key = -1;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
  std::vector<Matrix> grads_;
};

// Elementary operations. All operands must live on the same tape.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var matmul(const Var& a, const Var& b);
Var hadamard(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_colwise(const Var& a, const Var& bias);  // bias (r x 1) added to each column
Var transpose(const Var& a);
Var reshape(const Var& a, Eigen::Index rows, Eigen::Index cols);  // column-major
Var block(const Var& a, Eigen::Index r0, Eigen::Index c0, Eigen::Index nr, Eigen::Index nc);
Var vstack(const Var& top, const Var& bottom);
Var diag(const Var& v);  // column vector -> diagonal matrix

Var tanh(const Var& a);
Var softplus(const Var& a);
/// x for x < 0, 1 - exp(-x) for x >= 0 (bounded above by 1).
Var negative_celu(const Var& a);
Var exp(const Var& a);
/// Elementwise (exp(a*delta) - 1) / a.
Var phi1(const Var& a, const Var& delta);

Var sum(const Var& a);
Var sum_squares(const Var& a);

Var matrix_exp(const Var& a);
/// sum_j max(0, |lambda_j(A)| - 1 + margin); see spectral_penalty_value.
Var spectral_penalty(const Var& a, double margin);

/// Depthwise valid 1-D convolution: x (c x L), w (c x K), b (c x 1)
/// -> y (c x (L-K+1)), y[i,t] = b[i] + sum_k w[i,k] x[i,t+k].
Var conv1d_depthwise(const Var& x, const Var& w, const Var& b);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return matmul(a, b); }
inline Var operator*(double s, const Var& a) { return scale(a, s); }

}  // namespace bmk::ad
