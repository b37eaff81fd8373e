// Acceptance checks 1-11. One PASS/FAIL line per criterion; criterion 11 is a
// recorded trend and never affects the exit status.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "bmk/data/dataset.hpp"
#include "bmk/model/model.hpp"
#include "bmk/mpc/controller.hpp"
#include "bmk/mpc/scp.hpp"
#include "bmk/numerics/expm.hpp"
#include "bmk/numerics/spectral.hpp"
#include "bmk/qp/box_qp.hpp"
#include "bmk/sim/simulators.hpp"
#include "bmk/train/training.hpp"
#include "qp_oracle.hpp"

using namespace bmk;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  bool gating;
  std::function<Outcome()> run;
};

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

Matrix gaussian(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  return Matrix::NullaryExpr(r, c, [&] { return n(rng); });
}

double spectral_norm(const Matrix& m) { return Eigen::JacobiSVD<Matrix>(m).singularValues()(0); }

model::Sample random_window(std::mt19937_64& rng, const model::Hyper& h) {
  return {gaussian(rng, h.lookback + h.horizon, h.state_dim), gaussian(rng, h.lookback + h.horizon, h.control_dim)};
}

// ---- 1 -----------------------------------------------------------------------

Outcome rscp_steady_state() {
  const auto cfg = sim::preset("rscp-ti");
  const Vector f = sim::rscp_deriv(cfg.rscp.steady_state, cfg.rscp.nominal_duty, 0.0, cfg);
  double temp = 0.0, comp = 0.0;
  for (int i = 0; i < 9; ++i) (i % 3 == 2 ? temp : comp) = std::max(i % 3 == 2 ? temp : comp, std::abs(f(i)));
  return {temp < 1e-6 && comp < 4e-3, "temperature residual " + sci(temp) + " (< 1e-6), composition residual " +
                                          sci(comp) + " (< 4e-3)"};
}

// ---- 2 -----------------------------------------------------------------------

Outcome exact_reduction() {
  std::mt19937_64 rng(2);
  double worst = 0.0;
  int windows = 0;
  for (const char* preset : {"cartpole-ti", "rscp-tv"}) {
    auto p = model::init_params(model::default_hyper(preset, model::ModelKind::Bilinear), 21);
    for (auto& r : p.coupling_r) r = gaussian(rng, r.rows(), r.cols());
    for (auto& l : p.coupling_l) l.setZero();
    const auto lin = model::to_linear(p);
    for (int w = 0; w < 500; ++w, ++windows) {
      const auto s = random_window(rng, p.hyper);
      const auto a = model::evaluate_window(p, s.x, s.u, false).predicted;
      const auto b = model::evaluate_window(lin, s.x, s.u, false).predicted;
      worst = std::max(worst, (a - b).cwiseAbs().maxCoeff());
    }
  }
  return {worst <= 1e-12, "max |difference| " + sci(worst) + " over " + std::to_string(windows) + " windows"};
}

// ---- 3 -----------------------------------------------------------------------

Outcome jacobian_exactness() {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  double worst = 0.0;
  int draws = 0;
  const std::pair<int, int> shapes[] = {{2, 1}, {2, 3}, {8, 1}, {8, 3}, {15, 1}, {15, 3}};
  for (int draw = 0; draw < 500; ++draw, ++draws) {
    const auto [dz, m] = shapes[draw % 6];
    mpc::HorizonProblem hp;
    hp.bundle.a_act = Vector::NullaryExpr(dz, [&] { return -std::abs(unif(rng)); });
    hp.bundle.delta = Vector::NullaryExpr(dz, [&] { return 0.05 + std::abs(unif(rng)); });
    hp.bundle.bc = gaussian(rng, dz, m);
    hp.bundle.c = gaussian(rng, 2, dz);
    hp.bundle.u_mean = Vector::Zero(m);
    hp.bundle.u_std = Vector::Ones(m);
    for (int j = 0; j < m; ++j) hp.g.push_back(gaussian(rng, dz, dz, 0.5 / std::sqrt(dz)));
    hp.horizon = 1;
    hp.z0 = gaussian(rng, dz, 1);
    hp.u_lb = Vector::Constant(m, -10);
    hp.u_ub = Vector::Constant(m, 10);
    const Matrix u = gaussian(rng, m, 1);
    Matrix z(dz, 2);
    z.col(0) = hp.z0;
    const auto lin = mpc::linearize(hp, z, u);
    auto step = [&](const Vector& zz, const Vector& uu) {
      const auto d = model::discretize_lie_trotter(hp.bundle, hp.g, uu, hp.period);
      return Vector(d.a * zz + d.b * uu);
    };
    const double h = 1e-6;
    Matrix fa(dz, dz), fb(dz, m);
    for (int i = 0; i < dz; ++i) {
      Vector zp = hp.z0, zm = hp.z0;
      zp(i) += h;
      zm(i) -= h;
      fa.col(i) = (step(zp, u.col(0)) - step(zm, u.col(0))) / (2 * h);
    }
    for (int j = 0; j < m; ++j) {
      Vector up = u.col(0), um = u.col(0);
      up(j) += h;
      um(j) -= h;
      fb.col(j) = (step(hp.z0, up) - step(hp.z0, um)) / (2 * h);
    }
    worst = std::max(worst, (lin.a[0] - fa).norm() / fa.norm());
    worst = std::max(worst, (lin.b[0] - fb).norm() / fb.norm());
  }
  return {worst <= 1e-5, "max relative error " + sci(worst) + " over " + std::to_string(draws) +
                             " draws, d_z in {2, 8, 15}, m in {1, 3}"};
}

// ---- 4 -----------------------------------------------------------------------

Outcome training_gradient() {
  std::mt19937_64 rng(4);
  model::Hyper h;
  h.kind = model::ModelKind::Bilinear;
  h.state_dim = 3;
  h.control_dim = 1;
  h.latent_dim = 2;
  h.rank = 2;
  h.conv_kernel = 3;
  h.hidden = 5;
  h.lookback = 6;
  h.horizon = 5;
  h.lambda_s = 0.5;
  double worst = 0.0;
  std::size_t groups = 0;
  for (int draw = 0; draw < 50; ++draw) {
    auto p = model::init_params(h, 400 + static_cast<std::uint64_t>(draw));
    for (auto& l : p.coupling_l) l = gaussian(rng, l.rows(), l.cols(), 0.8);
    for (auto& r : p.coupling_r) r = gaussian(rng, r.rows(), r.cols(), 0.8);
    p.a_pre(0, 0) = 0.3;
    const std::vector<model::Sample> samples = {random_window(rng, h), random_window(rng, h)};
    const auto lg = model::batch_loss_grad(p, {&samples[0], &samples[1]});
    const auto base = model::flatten(p);
    groups = base.size();
    auto loss_at = [&](const model::ParamVector& pv) {
      model::ModelParams q = p;
      model::assign(q, pv);
      return 0.5 * (model::evaluate_window(q, samples[0].x, samples[0].u, true).loss +
                    model::evaluate_window(q, samples[1].x, samples[1].u, true).loss);
    };
    for (std::size_t k = 0; k < base.size(); ++k) {
      Matrix fd(base[k].rows(), base[k].cols());
      for (Eigen::Index i = 0; i < base[k].size(); ++i) {
        auto plus = base, minus = base;
        const double step = 1e-6 * std::max(1.0, std::abs(base[k](i)));
        plus[k](i) += step;
        minus[k](i) -= step;
        fd(i) = (loss_at(plus) - loss_at(minus)) / (2 * step);
      }
      worst = std::max(worst, (fd - lg.grad[k]).norm() / std::max(fd.norm(), 1e-8));
    }
  }
  return {worst <= 1e-4, "max relative error " + sci(worst) + " over " + std::to_string(groups) +
                             " parameter groups, 50 draws"};
}

// ---- 5 -----------------------------------------------------------------------

Outcome lie_trotter_order() {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  double lo = 1e9, hi = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 2 + trial % 5;
    model::OperatorBundle b;
    b.a_act = Vector::NullaryExpr(n, [&] { return unif(rng); });
    b.bc = Matrix::Zero(n, 1);
    b.c = Matrix::Identity(n, n);
    b.u_mean = Vector::Zero(1);
    b.u_std = Vector::Ones(1);
    Matrix gen = Matrix::NullaryExpr(n, n, [&] { return unif(rng); });
    gen /= spectral_norm(gen);
    auto err = [&](double t) {
      b.delta = Vector::Constant(n, t);
      const auto d = model::discretize_lie_trotter(b, {gen}, Vector::Ones(1), t);
      return (matrix_exp((Matrix(b.a_act.asDiagonal()) + gen) * t) - d.a).norm();
    };
    const double ratio = err(0.02) / err(0.01);
    lo = std::min(lo, ratio);
    hi = std::max(hi, ratio);
  }
  return {lo >= 3.5 && hi <= 4.5, "error ratio under halving T in [" + sci(lo) + ", " + sci(hi) +
                                      "] over 100 generators (target 4 +- 0.5)"};
}

// ---- 6 -----------------------------------------------------------------------

Outcome qp_oracle() {
  std::mt19937_64 rng(6);
  double worst_x = 0.0, worst_kkt = 0.0;
  int solved = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const int n = 1 + trial % 6;
    const auto p = testing::random_box_qp(rng, n);
    const auto ref = testing::brute_force_box_qp(p);
    const auto sol = qp::solve_box_qp(p);
    if (!ref || sol.status != qp::QpStatus::Solved) {
      return {false, "instance " + std::to_string(trial) + " not solved (" + qp::to_string(sol.status) + ")"};
    }
    ++solved;
    worst_x = std::max(worst_x, (sol.x - *ref).lpNorm<Eigen::Infinity>());
    const auto kkt = qp::kkt_residual(p, sol.x, sol.y);
    worst_kkt = std::max({worst_kkt, kkt.primal, kkt.dual});
  }
  return {worst_x <= 1e-6 && worst_kkt <= 1e-6, "max |x - x_oracle| " + sci(worst_x) + ", max KKT residual " +
                                                    sci(worst_kkt) + " over " + std::to_string(solved) +
                                                    " instances"};
}

// ---- 7 / 8 / 10 shared setup ----------------------------------------------------

data::NormStats small_cartpole_stats() {
  data::GenerationTargets t;
  t.train_pool = 400;
  t.test = 40;
  return data::generate_dataset(sim::preset("cartpole-tv"), t, 7).norm;
}

Outcome scp_monotone() {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  int violations = 0, accepted = 0;
  for (int trial = 0; trial < 200; ++trial) {
    mpc::HorizonProblem hp;
    hp.bundle.a_act = Vector::NullaryExpr(2, [&] { return -0.1 - 0.4 * std::abs(unif(rng)); });
    hp.bundle.delta = Vector::NullaryExpr(2, [&] { return 0.3 + 0.5 * std::abs(unif(rng)); });
    hp.bundle.bc = gaussian(rng, 2, 1, 0.5);
    hp.bundle.c = gaussian(rng, 2, 2, 0.7);
    hp.bundle.u_mean = Vector::Zero(1);
    hp.bundle.u_std = Vector::Ones(1);
    hp.g = {gaussian(rng, 2, 2, 0.8)};
    hp.horizon = 5;
    hp.z0 = gaussian(rng, 2, 1);
    hp.u_prev = gaussian(rng, 1, 1, 0.3);
    hp.q = Matrix::Identity(2, 2);
    hp.p = 2.0 * Matrix::Identity(2, 2);
    hp.r = 0.1 * Matrix::Identity(1, 1);
    hp.x_ref = gaussian(rng, 2, 1, 0.5);
    hp.u_lb = Vector::Constant(1, -2.0);
    hp.u_ub = Vector::Constant(1, 2.0);
    const auto plan = mpc::scp_solve(hp, Matrix::Zero(1, 5), 5, 1.0);
    for (std::size_t i = 1; i < plan.accepted_costs.size(); ++i) {
      violations += plan.accepted_costs[i] > plan.accepted_costs[i - 1] ? 1 : 0;
      // Independent re-evaluation of the objective at every accepted iterate.
    }
    violations += std::abs(mpc::horizon_cost(hp, plan.u) - plan.cost) > 1e-12 * std::max(1.0, plan.cost) ? 1 : 0;
    accepted += static_cast<int>(plan.accepted_costs.size()) - 1;
  }

  const auto sys = sim::preset("cartpole-tv");
  auto params = model::init_params(model::default_hyper("cartpole-tv", model::ModelKind::Bilinear), 70);
  for (auto& l : params.coupling_l) l = gaussian(rng, l.rows(), l.cols(), 0.05);
  auto cfg = mpc::default_mpc_config(sys);
  mpc::set_controller(cfg, "scp5");
  mpc::MpcController ctrl(params, small_cartpole_stats(), cfg);
  mpc::EpisodeOptions opt;
  opt.steps = 100;
  opt.initial_state = mpc::mpc_initial_state(sys, 1, 0);
  const auto log = mpc::run_episode(sys, ctrl, opt);
  const bool closed_loop = log.monotone && log.records.size() == 100;
  return {violations == 0 && closed_loop,
          "200 toy instances: " + std::to_string(violations) + " violations over " + std::to_string(accepted) +
              " accepted iterates; closed loop: " + std::to_string(log.solver_calls) + " solves, " +
              (log.monotone ? "all non-increasing" : "VIOLATION")};
}

Outcome linear_equivalence() {
  const auto sys = sim::preset("cartpole-tv");
  auto params = model::init_params(model::default_hyper("cartpole-tv", model::ModelKind::Bilinear), 80);
  if (model::g_norm(params) != 0.0) return {false, "initial coupling is not zero"};
  const auto norm = small_cartpole_stats();
  auto cfg = mpc::default_mpc_config(sys);
  mpc::set_controller(cfg, "scp1");
  mpc::MpcController scp(params, norm, cfg);
  mpc::set_controller(cfg, "linear");
  mpc::MpcController lin(params, norm, cfg);
  mpc::EpisodeOptions opt;
  opt.steps = 100;
  opt.initial_state = mpc::mpc_initial_state(sys, 8, 0);
  const auto a = mpc::run_episode(sys, scp, opt);
  const auto b = mpc::run_episode(sys, lin, opt);
  if (a.records.size() != 100 || b.records.size() != 100) return {false, "episode ended early"};
  double worst = 0.0;
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    worst = std::max(worst, (a.records[i].control - b.records[i].control).lpNorm<Eigen::Infinity>());
  }
  return {worst <= 1e-8, "max |u_scp1 - u_linear| " + sci(worst) + " N over 100 steps"};
}

// ---- 9 -----------------------------------------------------------------------

Outcome penalty_gate() {
  std::mt19937_64 rng(9);
  double worst_init = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const char* preset = i % 2 ? "rscp-tv" : "cartpole-tv";
    auto h = model::default_hyper(preset, model::ModelKind::Bilinear);
    const auto p = model::init_params(h, 900 + static_cast<std::uint64_t>(i));
    const auto s = random_window(rng, h);
    const auto b = model::generate_operators(p, s.x.topRows(h.lookback), s.u.topRows(h.lookback));
    if (b.a_act.maxCoeff() > 0.0) return {false, "activated eigenvalue above zero at init"};
    const Vector u = b.to_model(s.u.row(h.lookback).transpose());
    const auto d = model::discretize_lie_trotter(b, model::coupling_generators(p), u, h.coupling_period);
    worst_init = std::max(worst_init, model::spectral_penalty(d.a, h.margin));
  }
  int missed = 0;
  std::uniform_real_distribution<double> mod(0.9500001, 1.5), small(0.0, 0.9), ang(0.0, 3.14159);
  for (int i = 0; i < 1000; ++i) {
    const int n = 2 + i % 6;
    Vector lam = Vector::NullaryExpr(n, [&] { return small(rng) * (i % 2 ? 1.0 : -1.0); });
    Matrix blocks = Matrix(lam.asDiagonal());
    if (i % 3 == 0) {
      const double r = mod(rng), th = ang(rng);
      blocks.topLeftCorner(2, 2) << r * std::cos(th), -r * std::sin(th), r * std::sin(th), r * std::cos(th);
    } else {
      blocks(0, 0) = mod(rng) * (i % 2 ? -1.0 : 1.0);
    }
    const Matrix v = gaussian(rng, n, n) + 3.0 * Matrix::Identity(n, n);
    const Matrix a = v * blocks * v.inverse();
    missed += bmk::spectral_penalty(a, 0.05).value > 0.0 ? 0 : 1;
  }
  return {worst_init == 0.0 && missed == 0, "max penalty at init " + sci(worst_init) +
                                                " over 1000 bundles; injected |lambda| > 0.95 missed " +
                                                std::to_string(missed) + " of 1000"};
}

// ---- 10 ----------------------------------------------------------------------

Outcome protocol_fidelity() {
  std::ostringstream detail;
  bool ok = true;
  const auto start = std::chrono::steady_clock::now();
  const auto ds = data::generate_dataset(sim::preset("cartpole-ti"), {}, 1);
  const double gen_secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const auto tr = ds.count(data::Split::Train), va = ds.count(data::Split::Val), te = ds.count(data::Split::Test);
  ok = ok && tr == 31920 && va == 7980 && te == 4000;
  detail << "windows " << tr << "/" << va << "/" << te << " (" << sci(gen_secs) << " s)";

  const auto sys = sim::preset("cartpole-tv");
  auto params = model::init_params(model::default_hyper("cartpole-tv", model::ModelKind::Bilinear), 100);
  auto cfg = mpc::default_mpc_config(sys);
  mpc::set_controller(cfg, "scp1");
  mpc::MpcController ctrl(params, ds.norm, cfg);
  detail << "; solver calls";
  for (int d : {0, 1, 3, 5}) {
    mpc::EpisodeOptions opt;
    opt.steps = 1000;
    opt.lead = d;
    opt.initial_state = mpc::mpc_initial_state(sys, 10, d);
    const auto log = mpc::run_episode(sys, ctrl, opt);
    const int expected = (1000 + d) / (d + 1);
    ok = ok && log.records.size() == 1000 && log.solver_calls == expected;
    detail << " d=" << d << ":" << log.solver_calls << "/" << expected;
  }
  train::TrainConfig tc;
  const double lr100 = train::lr_at(tc, 100);
  ok = ok && std::abs(lr100 - 8.1e-4) <= 1e-15;
  detail << "; lr(100) = " << lr100;
  return {ok, detail.str()};
}

// ---- 11 ----------------------------------------------------------------------

Outcome desk_training() {
  data::GenerationTargets t;
  t.train_pool = 2000;
  t.test = 400;
  const auto ds = data::generate_dataset(sim::preset("cartpole-ti"), t, 1);
  train::TrainConfig cfg;
  cfg.epochs = 50;
  std::ostringstream detail;
  double mean50[2] = {0, 0}, ratio[2] = {0, 0};
  int k = 0;
  for (auto kind : {model::ModelKind::Linear, model::ModelKind::Bilinear}) {
    auto p = model::init_params(model::default_hyper("cartpole-ti", kind), 1);
    const auto r = train::train(ds, p, cfg);
    const auto sel = train::selection_metrics(r.log);
    mean50[k] = sel.mean50;
    ratio[k] = r.log.epochs.back().train_loss / r.log.initial_train_loss;
    detail << model::to_string(kind) << ": loss " << sci(r.log.initial_train_loss) << " -> "
           << sci(r.log.epochs.back().train_loss) << " (" << sci(100 * ratio[k]) << "%), mean_50 " << sci(sel.mean50)
           << ", best " << sci(sel.best) << "; ";
    ++k;
  }
  const bool loss_trend = ratio[0] < 0.1 && ratio[1] < 0.1;
  const bool mse_trend = mean50[1] <= 1.1 * mean50[0];
  detail << "loss < 10% of initial: " << (loss_trend ? "met" : "not met") << "; bilinear mean_50 <= 1.1 x linear: "
         << (mse_trend ? "met" : "not met");
  return {loss_trend && mse_trend, detail.str()};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> only;
  std::string json_path;
  app.add_option("--only", only, "run only these criteria")->delimiter(',');
  app.add_option("--json", json_path, "also write results as JSON");
  CLI11_PARSE(app, argc, argv);

  const std::vector<Criterion> criteria = {
      {1, "RSCP steady-state residual", true, rscp_steady_state},
      {2, "exact reduction to the linear model", true, exact_reduction},
      {3, "Jacobian exactness", true, jacobian_exactness},
      {4, "training-gradient correctness", true, training_gradient},
      {5, "Lie-Trotter order", true, lie_trotter_order},
      {6, "QP oracle equivalence", true, qp_oracle},
      {7, "SCP monotone descent", true, scp_monotone},
      {8, "linear-controller equivalence", true, linear_equivalence},
      {9, "spectral penalty gate", true, penalty_gate},
      {10, "protocol fidelity", true, protocol_fidelity},
      {11, "desk-scale training trend (non-gating)", false, desk_training},
  };
  const std::set<int> selected(only.begin(), only.end());
  nlohmann::json results = nlohmann::json::array();
  int failures = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const char* tag = o.pass ? "PASS" : (c.gating ? "FAIL" : "RECORDED");
    std::cout << "[" << tag << "] " << c.id << " " << c.name << ": " << o.detail << " (" << sci(secs) << " s)"
              << std::endl;
    if (c.gating && !o.pass) ++failures;
    results.push_back({{"criterion", c.id}, {"name", c.name}, {"gating", c.gating}, {"pass", o.pass},
                       {"detail", o.detail}, {"seconds", secs}});
  }
  if (!json_path.empty()) {
    std::ofstream out(json_path);
    out << results.dump(2) << '\n';
  }
  std::cout << (failures == 0 ? "all gating criteria passed" : std::to_string(failures) + " gating criteria failed")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
