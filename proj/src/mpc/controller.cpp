#include "bmk/mpc/controller.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <deque>
#include <limits>
#include <stdexcept>

#include "bmk/data/rng.hpp"
#include "bmk/model/model.hpp"

namespace bmk::mpc {
namespace {

using Clock = std::chrono::steady_clock;

constexpr std::uint64_t kMpcStreamBase = std::uint64_t{3} << 40;

Matrix diag(std::initializer_list<double> v) {
  Vector d(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) d(i++) = x;
  return d.asDiagonal();
}

void fnv(std::uint64_t& h, const Matrix& m) {
  const auto* bytes = reinterpret_cast<const unsigned char*>(m.data());
  for (std::size_t i = 0; i < static_cast<std::size_t>(m.size()) * sizeof(double); ++i) {
    h ^= bytes[i];
    h *= 1099511628211ULL;
  }
}

double quad(const Matrix& w, const Vector& e) { return e.dot(w * e); }

}  // namespace

MpcConfig default_mpc_config(const sim::SystemConfig& sys) {
  MpcConfig c;
  if (sys.system == sim::System::CartPole) {
    c.q = diag({1.0, 0.01, 100.0, 0.01});
    c.r = diag({0.5});
    c.p = diag({5000.0, 0.0, 0.0, 0.0});
    c.x_ref = Vector::Zero(4);
  } else {
    c.q = diag({1e4, 1e4, 1.0, 1e4, 1e4, 1.0, 1e4, 1e4, 1.0});
    c.r = 5e-12 * Matrix::Identity(3, 3);
    c.p = c.q;
    c.x_ref = sys.rscp.steady_state;
  }
  c.u_lb = sim::control_lower(sys);
  c.u_ub = sim::control_upper(sys);
  return c;
}

void set_controller(MpcConfig& cfg, std::string_view name) {
  if (name == "linear") {
    cfg.kind = ControllerKind::Linear;
    cfg.n_scp = 1;
    return;
  }
  if (name.size() > 3 && name.substr(0, 3) == "scp") {
    const std::string digits(name.substr(3));
    if (digits.find_first_not_of("0123456789") == std::string::npos) {
      const int n = std::stoi(digits);
      if (n >= 1) {
        cfg.kind = ControllerKind::Scp;
        cfg.n_scp = n;
        return;
      }
    }
  }
  throw std::invalid_argument("unknown controller '" + std::string(name) + "' (expected linear or scp<N>)");
}

std::string controller_name(const MpcConfig& cfg) {
  return cfg.kind == ControllerKind::Linear ? "linear" : "scp" + std::to_string(cfg.n_scp);
}

std::uint64_t bundle_checksum(const model::OperatorBundle& b) {
  std::uint64_t h = 1469598103934665603ULL;
  fnv(h, b.a_act);
  fnv(h, b.delta);
  fnv(h, b.bc);
  fnv(h, b.c);
  fnv(h, b.u_mean);
  fnv(h, b.u_std);
  return h;
}

MpcController::MpcController(model::ModelParams params, data::NormStats norm, MpcConfig cfg)
    : params_(std::move(params)), norm_(std::move(norm)), cfg_(std::move(cfg)) {
  const int n = params_.hyper.state_dim, m = params_.hyper.control_dim;
  if (cfg_.q.rows() != n || cfg_.p.rows() != n || cfg_.x_ref.size() != n || cfg_.r.rows() != m ||
      cfg_.u_lb.size() != m || cfg_.u_ub.size() != m) {
    throw DimensionError("mpc: weights do not match the model dimensions");
  }
  if (cfg_.horizon < 1) throw std::invalid_argument("mpc: horizon must be positive");
  if (cfg_.kind == ControllerKind::Scp) g_ = model::coupling_generators(params_);
}

void MpcController::reset() {
  last_plan_raw_.reset();
  warm_.reset();
}

MpcController::Result MpcController::solve(const Matrix& hist_x_raw, const Matrix& hist_u_raw, const Vector& x_raw,
                                           const Vector& u_prev_raw, int shift) {
  const auto start = Clock::now();
  const int m = params_.hyper.control_dim, hz = cfg_.horizon;

  Result res;
  HorizonProblem& hp = res.problem;
  hp.bundle = model::generate_operators(params_, norm_.normalize_states(hist_x_raw), norm_.normalize_controls(hist_u_raw));
  hp.g = g_;
  hp.period = params_.hyper.coupling_period;
  hp.horizon = hz;
  hp.z0 = model::encode(params_, norm_.normalize_state(x_raw));

  const Vector sx = norm_.state_std;
  const Vector su = norm_.control_std.cwiseProduct(hp.bundle.u_std);
  hp.q = sx.asDiagonal() * cfg_.q * sx.asDiagonal();
  hp.p = sx.asDiagonal() * cfg_.p * sx.asDiagonal();
  hp.r = su.asDiagonal() * cfg_.r * su.asDiagonal();
  hp.x_ref = norm_.normalize_state(cfg_.x_ref);
  auto to_model = [&](const Vector& raw) { return hp.bundle.to_model(norm_.normalize_control(raw)); };
  hp.u_prev = to_model(u_prev_raw);
  hp.u_lb = to_model(cfg_.u_lb);
  hp.u_ub = to_model(cfg_.u_ub);

  Matrix nominal(m, hz);
  for (int k = 0; k < hz; ++k) {
    Vector u = Vector::Zero(m);
    if (last_plan_raw_) u = to_model(last_plan_raw_->col(std::min(k + shift, hz - 1)));
    nominal.col(k) = u.cwiseMax(hp.u_lb).cwiseMin(hp.u_ub);
  }

  const qp::QpSolution* warm = warm_ ? &*warm_ : nullptr;
  if (cfg_.kind == ControllerKind::Linear) {
    const double eps = cfg_.linear_trust_region ? cfg_.eps0 : std::numeric_limits<double>::infinity();
    res.plan = linear_qp_solve(hp, nominal, eps, warm, cfg_.qp);
  } else {
    res.plan = scp_solve(hp, nominal, cfg_.n_scp, cfg_.eps0, warm, cfg_.qp, cfg_.eps_min);
  }
  warm_ = res.plan.last_qp;

  res.u_raw.resize(m, hz);
  for (int k = 0; k < hz; ++k) {
    const Vector raw = norm_.denormalize_control(hp.bundle.from_model(res.plan.u.col(k)));
    res.u_raw.col(k) = raw.cwiseMax(cfg_.u_lb).cwiseMin(cfg_.u_ub);
  }
  last_plan_raw_ = res.u_raw;
  res.bundle_hash = bundle_checksum(hp.bundle);
  res.seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return res;
}

double EpisodeLog::final_log_cost() const {
  if (records.empty()) return std::numeric_limits<double>::quiet_NaN();
  return std::log10(records.back().running_average);
}

double EpisodeLog::straddle_fraction() const {
  if (records.empty()) return 0.0;
  std::size_t c = 0;
  for (const auto& r : records) c += r.gershgorin_straddles ? 1 : 0;
  return static_cast<double>(c) / static_cast<double>(records.size());
}

double EpisodeLog::mean_step_seconds() const {
  if (records.empty()) return 0.0;
  double s = 0.0;
  for (const auto& r : records) s += r.seconds;
  return s / static_cast<double>(records.size());
}

Vector mpc_initial_state(const sim::SystemConfig& sys, std::uint64_t seed, int index) {
  data::CounterRng rng(seed, kMpcStreamBase + static_cast<std::uint64_t>(index));
  return data::sample_initial_state(sys, rng);
}

EpisodeLog run_episode(const sim::SystemConfig& sys, MpcController& ctrl, const EpisodeOptions& opt) {
  if (opt.lead < 0) throw std::invalid_argument("run_episode: lead must be non-negative");
  const MpcConfig& cfg = ctrl.config();
  if (opt.lead + 1 > cfg.horizon) throw std::invalid_argument("run_episode: lead exceeds the planning horizon");
  if (opt.initial_state.size() != sys.state_dim()) throw DimensionError("run_episode: initial state dimension");
  const int lookback = ctrl.params().hyper.lookback;

  EpisodeLog log;
  log.controller = controller_name(cfg);
  log.lead = opt.lead;
  log.initial_state = opt.initial_state;
  ctrl.reset();

  const Vector zero_control = ctrl.norm().control_mean;
  Matrix hist_x = opt.initial_state.transpose().replicate(lookback, 1);
  Matrix hist_u = zero_control.transpose().replicate(lookback, 1);
  Vector x = opt.initial_state, u_prev = zero_control;
  double t = 0.0, total = 0.0;

  std::deque<int> queue;
  MpcController::Result active;
  int since_solve = 1;
  for (int step = 0; step < opt.steps; ++step) {
    const auto start = Clock::now();
    StepRecord rec;
    rec.step = step;
    rec.time = t;
    if (queue.empty()) {
      active = ctrl.solve(hist_x, hist_u, x, u_prev, since_solve);
      since_solve = 0;
      ++log.solver_calls;
      for (int k = 0; k <= opt.lead; ++k) queue.push_back(k);
      rec.solved = true;
      rec.scp_iterations = static_cast<int>(active.plan.iterations.size());
      rec.scp_accepted = static_cast<int>(active.plan.accepted_costs.size()) - 1;
      for (const auto& it : active.plan.iterations) rec.qp_iterations += it.qp_iterations;
      if (active.plan.qp_flagged) ++log.qp_flagged;
      const auto& costs = active.plan.accepted_costs;
      for (std::size_t i = 1; i < costs.size(); ++i) log.monotone = log.monotone && costs[i] <= costs[i - 1];
    }
    const int k = queue.front();
    queue.pop_front();
    ++since_solve;
    const Vector u = active.u_raw.col(k);
    rec.control = u;
    rec.bundle_hash = active.bundle_hash;
    rec.plan_cost = active.plan.cost;

    const auto ops = model::discretize_lie_trotter(active.problem.bundle, active.problem.g, active.plan.u.col(k),
                                                   active.problem.period);
    const auto diag_info = stability_diagnostics(ops.a);
    rec.spectral_radius = diag_info.spectral_radius;
    rec.gershgorin_straddles = diag_info.gershgorin_straddles;

    sim::Step next;
    try {
      next = sim::step_euler(sys, x, u, t);
    } catch (const DomainError&) {
      log.termination = sim::Termination::NonFinite;
      break;
    }
    rec.state = next.state;
    rec.stage_cost = quad(cfg.q, next.state - cfg.x_ref) + quad(cfg.r, u - u_prev);
    total += rec.stage_cost;
    rec.running_average = total / (step + 1);
    rec.seconds = std::chrono::duration<double>(Clock::now() - start).count();
    log.records.push_back(std::move(rec));

    if (lookback > 1) {
      hist_x.topRows(lookback - 1) = hist_x.bottomRows(lookback - 1).eval();
      hist_u.topRows(lookback - 1) = hist_u.bottomRows(lookback - 1).eval();
    }
    hist_x.row(lookback - 1) = x.transpose();
    hist_u.row(lookback - 1) = u.transpose();
    x = next.state;
    u_prev = u;
    t = next.time;

    const auto term = sim::check_termination(sys, x, 0, sim::EpisodeMode::Test);
    const bool envelope = term == sim::Termination::Angle || term == sim::Termination::Position;
    if (term != sim::Termination::Continue && (!envelope || opt.stop_on_envelope)) {
      log.termination = term;
      break;
    }
  }
  return log;
}

}  // namespace bmk::mpc
