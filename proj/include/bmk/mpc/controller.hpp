#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bmk/data/dataset.hpp"
#include "bmk/model/params.hpp"
#include "bmk/mpc/scp.hpp"
#include "bmk/sim/simulators.hpp"

namespace bmk::mpc {

enum class ControllerKind { Linear, Scp };

/// Weights, reference and bounds are in raw simulator units.
struct MpcConfig {
  ControllerKind kind = ControllerKind::Scp;
  int n_scp = 1;
  int horizon = 30;
  double eps0 = 1.0;
  double eps_min = 1e-9;
  bool linear_trust_region = true;
  Matrix q, r, p;
  Vector x_ref;
  Vector u_lb, u_ub;
  qp::QpSettings qp;
};

/// Per-system weights for the named presets.
MpcConfig default_mpc_config(const sim::SystemConfig& sys);

/// "linear", "scp1", "scp5" (any "scp<N>").
void set_controller(MpcConfig& cfg, std::string_view name);
std::string controller_name(const MpcConfig& cfg);

std::uint64_t bundle_checksum(const model::OperatorBundle& b);

class MpcController {
 public:
  MpcController(model::ModelParams params, data::NormStats norm, MpcConfig cfg);

  struct Result {
    Matrix u_raw;  // m x H, denormalized and clipped to the control box
    Plan plan;     // model units
    HorizonProblem problem;
    std::uint64_t bundle_hash = 0;
    double seconds = 0.0;
  };

  /// hist_x, hist_u: raw lookback rows ending just before x_raw; u_prev_raw is
  /// the control applied last. `shift` is the number of steps consumed since
  /// the previous solve and drives the shift-and-hold nominal.
  Result solve(const Matrix& hist_x_raw, const Matrix& hist_u_raw, const Vector& x_raw, const Vector& u_prev_raw,
               int shift = 1);

  void reset();
  const MpcConfig& config() const { return cfg_; }
  const model::ModelParams& params() const { return params_; }
  const data::NormStats& norm() const { return norm_; }
  const std::vector<Matrix>& generators() const { return g_; }

 private:
  model::ModelParams params_;
  data::NormStats norm_;
  MpcConfig cfg_;
  std::vector<Matrix> g_;
  std::optional<Matrix> last_plan_raw_;
  std::optional<qp::QpSolution> warm_;
};

struct StepRecord {
  int step = 0;
  double time = 0.0;
  Vector control;  // applied, raw
  Vector state;    // true state after the step, raw
  double stage_cost = 0.0;
  double running_average = 0.0;
  bool solved = false;
  int scp_iterations = 0;
  int scp_accepted = 0;
  int qp_iterations = 0;
  double seconds = 0.0;
  double spectral_radius = 0.0;
  bool gershgorin_straddles = false;
  std::uint64_t bundle_hash = 0;
  double plan_cost = 0.0;
};

struct EpisodeLog {
  std::string controller;
  int lead = 0;
  Vector initial_state;
  std::vector<StepRecord> records;
  sim::Termination termination = sim::Termination::Horizon;
  int solver_calls = 0;
  int qp_flagged = 0;
  bool monotone = true;

  /// log10 of the running-average stage cost at the last recorded step.
  double final_log_cost() const;
  double straddle_fraction() const;
  double mean_step_seconds() const;
};

struct EpisodeOptions {
  int steps = 1000;
  int lead = 0;  // d: commit to d + 1 controls per solve
  Vector initial_state;
  /// Also stop on the cart-pole angle/position envelope used for data
  /// generation. Non-finite states and reactor validity bounds always stop.
  bool stop_on_envelope = false;
};

/// Stale-plan receding-horizon executor (bundle and plan frozen while the
/// commit queue drains).
EpisodeLog run_episode(const sim::SystemConfig& sys, MpcController& ctrl, const EpisodeOptions& opt);

/// Reset state of MPC episode `index` under `seed`.
Vector mpc_initial_state(const sim::SystemConfig& sys, std::uint64_t seed, int index);

}  // namespace bmk::mpc
