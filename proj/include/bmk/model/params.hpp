#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "bmk/numerics/matrix.hpp"

namespace bmk::model {

enum class ModelKind { Linear, Bilinear };
std::string to_string(ModelKind k);
ModelKind model_kind_from_string(const std::string& s);

struct Hyper {
  ModelKind kind = ModelKind::Bilinear;
  int state_dim = 4;
  int control_dim = 1;
  int latent_dim = 8;
  int rank = 8;
  int conv_kernel = 15;
  int hidden = 64;
  int lookback = 30;
  int horizon = 30;
  double lambda_s = 0.01;
  double margin = 0.05;
  double coupling_period = 1.0;
  double inst_eps = 1e-2;  // variance floor of the control instance normalization

  int channels() const { return latent_dim + control_dim; }
  int conv_length() const { return lookback - conv_kernel + 1; }
  bool bilinear() const { return kind == ModelKind::Bilinear; }
};

/// Defaults per system class: d_z 8 / 15, conv kernel 15 / 5, rank = d_z.
Hyper default_hyper(const std::string& preset, ModelKind kind);

/// Two-layer perceptron head: out = w2 tanh(w1 x + b1) + b2.
struct Head {
  Matrix w1, b1, w2, b2;
};

struct ModelParams {
  Hyper hyper;
  Matrix enc_w1, enc_b1, enc_w2, enc_b2;  // n -> hidden -> d_z
  Matrix a_pre;                            // d_z x 1, before negative-CELU
  Matrix conv_w, conv_b;                   // depthwise, (d_z + m) x K
  Matrix shared_w, shared_b;               // flattened conv output -> hidden
  Head delta, bc, dec;
  std::vector<Matrix> coupling_l, coupling_r;  // m factors d_z x r (bilinear only)

  /// Calls f(name, tensor) for every tensor in declaration order.
  template <typename F>
  void visit(F&& f) {
    visit_impl(*this, f);
  }
  template <typename F>
  void visit(F&& f) const {
    visit_impl(*this, f);
  }

  std::size_t tensor_count() const;
  std::size_t scalar_count() const;

 private:
  template <typename Self, typename F>
  static void visit_impl(Self& p, F& f) {
    f("enc_w1", p.enc_w1);
    f("enc_b1", p.enc_b1);
    f("enc_w2", p.enc_w2);
    f("enc_b2", p.enc_b2);
    f("a_pre", p.a_pre);
    f("conv_w", p.conv_w);
    f("conv_b", p.conv_b);
    f("shared_w", p.shared_w);
    f("shared_b", p.shared_b);
    auto head = [&](const std::string& n, auto& h) {
      f(n + ".w1", h.w1);
      f(n + ".b1", h.b1);
      f(n + ".w2", h.w2);
      f(n + ".b2", h.b2);
    };
    head("delta", p.delta);
    head("bc", p.bc);
    head("dec", p.dec);
    for (std::size_t i = 0; i < p.coupling_l.size(); ++i) {
      f("L" + std::to_string(i), p.coupling_l[i]);
      f("R" + std::to_string(i), p.coupling_r[i]);
    }
  }
};

/// Tensors aligned with ModelParams::visit order.
using ParamVector = std::vector<Matrix>;
ParamVector flatten(const ModelParams& p);
void assign(ModelParams& p, const ParamVector& values);
ParamVector zeros_like(const ModelParams& p);

/// Uniform(+-1/sqrt(fan_in)) layers, a_n = -(n + 1), L = 0, R ~ U(+-1e-4).
ModelParams init_params(const Hyper& h, std::uint64_t seed);

/// Same backbone without coupling factors: the Linear baseline view of p.
ModelParams to_linear(const ModelParams& p);

/// Coupling generators G_i = L_i R_i^T (empty for the linear model).
std::vector<Matrix> coupling_generators(const ModelParams& p);
/// (sum_i ||G_i||_F^2)^(1/2).
double g_norm(const ModelParams& p);

class CheckpointError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(const ModelParams& p, const std::string& path);
ModelParams read_checkpoint(const std::string& path);

}  // namespace bmk::model
