#include <cmath>
#include <random>

#include "doctest.h"

#include "bmk/sim/simulators.hpp"

using namespace bmk;
using namespace bmk::sim;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

// Oracle: frictionless cart-pole at theta = 0, theta_dot = 0 reduces to
// theta_dd = -F / (M l (4/3 - m/M)),  x_dd = (F - m l theta_dd) / M.
std::pair<double, double> frictionless_upright(double force) {
  const double g = 10, mc = 1, mp = 0.1, l = 0.5, total = mc + mp;
  (void)g;
  const double theta_dd = (-force / total) / (l * (4.0 / 3.0 - mp / total));
  const double x_dd = (force - mp * l * theta_dd) / total;
  return {x_dd, theta_dd};
}

double cartpole_energy(const Vector& s) {
  const double mc = 1, mp = 0.1, l = 0.5, g = 10, total = mc + mp;
  return 0.5 * total * s(1) * s(1) + mp * l * s(1) * s(3) * std::cos(s(2)) +
         2.0 / 3.0 * mp * l * l * s(3) * s(3) + mp * g * l * std::cos(s(2));
}

}  // namespace

TEST_CASE("presets resolve by name") {
  for (auto name : {"cartpole-ti", "cartpole-tv", "rscp-ti", "rscp-tv"}) {
    CHECK(preset(name).name == name);
  }
  CHECK_THROWS_AS(preset("pendulum"), std::invalid_argument);
  const auto tv = preset("cartpole-tv");
  CHECK(tv.cartpole.mu_c_base == 5e-4);
  CHECK(tv.cartpole.mu_p == 2e-6);
  CHECK(preset("cartpole-ti").cartpole.mu_c_base == 0.0);
  CHECK(preset("rscp-ti").dt == doctest::Approx(18.0 / 3600.0));
  const auto r = preset("rscp-ti").rscp;
  CHECK(r.k1 == 9.972e6);
  CHECK(r.cm == 2.0);
  CHECK(r.alpha_a == 3.5);
}

TEST_CASE("cart-pole equilibrium and pushed-cart derivative") {
  const auto cfg = preset("cartpole-ti");
  CHECK(cartpole_deriv(Vector::Zero(4), 0.0, 0.0, cfg).cwiseAbs().maxCoeff() == 0.0);
  const Vector d = cartpole_deriv(Vector::Zero(4), 20.0, 0.0, cfg);
  const auto [x_dd, theta_dd] = frictionless_upright(20.0);
  CHECK(d(0) == 0.0);
  CHECK(d(2) == 0.0);
  CHECK(d(1) == doctest::Approx(x_dd).epsilon(1e-12));
  CHECK(d(3) == doctest::Approx(theta_dd).epsilon(1e-12));
  CHECK(std::abs(d(1) - 19.512) <= 1e-3);
  CHECK(std::abs(d(3) + 29.268) <= 1e-3);
}

TEST_CASE("cart-pole TV matches TI with base friction where the modulation vanishes") {
  auto tv = preset("cartpole-tv");
  auto ti = tv;
  ti.variant = Variant::TimeInvariant;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int k = 0; k < 20; ++k) {
    const Vector s = vec({u(rng), u(rng), 0.3 * u(rng), u(rng)});
    const double f = 20 * u(rng);
    CHECK((cartpole_deriv(s, f, 0.0, tv) - cartpole_deriv(s, f, 0.0, ti)).norm() == 0.0);
    // sin(pi) is ~1e-16, not exactly zero
    CHECK((cartpole_deriv(s, f, M_PI, tv) - cartpole_deriv(s, f, 0.0, ti)).norm() <= 1e-12);
  }
  CHECK(cart_friction(tv, M_PI / 2) == doctest::Approx(1.0 + 5e-4));
}

TEST_CASE("cart-pole friction opposes the cart velocity") {
  auto cfg = preset("cartpole-tv");
  const double t = M_PI / 2;  // mu_c ~ 1
  const Vector moving = vec({0, 1.0, 0, 0});
  const Vector d = cartpole_deriv(moving, 0.0, t, cfg);
  CHECK(d(1) < 0.0);
}

TEST_CASE("Euler step from rest under full force") {
  const auto cfg = preset("cartpole-ti");
  const auto st = step_euler(cfg, Vector::Zero(4), vec({20.0}), 0.0);
  CHECK(st.time == doctest::Approx(0.02));
  CHECK(std::abs(st.state(1) - 0.39024) <= 2e-5);
  CHECK(std::abs(st.state(3) + 0.58536) <= 2e-5);
  CHECK(st.state(0) == 0.0);
  // clipping happens inside the simulator
  const auto clipped = step_euler(cfg, Vector::Zero(4), vec({250.0}), 0.0);
  CHECK(clipped.state == st.state);
}

TEST_CASE("Euler step energy error is second order in dt") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int k = 0; k < 10; ++k) {
    auto cfg = preset("cartpole-ti");
    const Vector s = vec({u(rng), u(rng), 0.2 * u(rng), u(rng)});
    const double e0 = cartpole_energy(s);
    cfg.dt = 0.02;
    const double d1 = std::abs(cartpole_energy(step_euler(cfg, s, vec({0.0}), 0).state) - e0);
    cfg.dt = 0.01;
    const double d2 = std::abs(cartpole_energy(step_euler(cfg, s, vec({0.0}), 0).state) - e0);
    CHECK(d1 / d2 == doctest::Approx(4.0).epsilon(0.1));
  }
}

TEST_CASE("reactor temperatures are stationary at the nominal point") {
  const auto cfg = preset("rscp-ti");
  const Vector d = rscp_deriv(cfg.rscp.steady_state, cfg.rscp.nominal_duty, 0.0, cfg);
  CHECK(std::abs(d(2)) < 1e-6);
  CHECK(std::abs(d(5)) < 1e-6);
  CHECK(std::abs(d(8)) < 1e-6);
  // duties are O(1e6) kJ/h
  for (int i = 0; i < 3; ++i) {
    CHECK(cfg.rscp.nominal_duty(i) > 5e5);
    CHECK(cfg.rscp.nominal_duty(i) < 5e6);
  }
}

TEST_CASE("heat duties enter additively") {
  const auto cfg = preset("rscp-ti");
  CHECK(1.0 / (cfg.rscp.rho * cfg.rscp.cp * cfg.rscp.v1) == doctest::Approx(1.0 / 4200.0));
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1, 1);
  const double vols[3] = {cfg.rscp.v1, cfg.rscp.v2, cfg.rscp.v3};
  for (int k = 0; k < 20; ++k) {
    Vector s = cfg.rscp.steady_state;
    for (int i = 0; i < 9; ++i) s(i) += (i % 3 == 2 ? 10.0 : 0.03) * u(rng);
    const Vector q1 = cfg.rscp.nominal_duty + 1e6 * Vector::NullaryExpr(3, [&] { return u(rng); });
    const Vector q2 = cfg.rscp.nominal_duty + 1e6 * Vector::NullaryExpr(3, [&] { return u(rng); });
    const Vector diff = rscp_deriv(s, q1, 0.0, cfg) - rscp_deriv(s, q2, 0.0, cfg);
    for (int i = 0; i < 9; ++i) {
      if (i % 3 != 2) {
        CHECK(diff(i) == 0.0);
      } else {
        const double expected = (q1(i / 3) - q2(i / 3)) / (cfg.rscp.rho * cfg.rscp.cp * vols[i / 3]);
        CHECK(std::abs(diff(i) - expected) <= 1e-9 * std::abs(expected) + 1e-10);
      }
    }
  }
}

TEST_CASE("recycle equilibrium compositions") {
  const auto p = preset("rscp-ti").rscp;
  auto pure = rscp_recycle(p, 1.0, 0.0);
  CHECK(pure.xa == 1.0);
  CHECK(pure.xb == 0.0);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0, 1);
  for (int k = 0; k < 100; ++k) {
    const double a = u(rng), b = (1 - a) * u(rng);
    const auto r = rscp_recycle(p, a, b);
    CHECK(std::abs(r.xa + r.xb + r.xc - 1.0) <= 1e-12);
  }
  CHECK_THROWS_AS(rscp_recycle(p, -1.0, 0.0), DomainError);
  const auto cfg = preset("rscp-ti");
  Vector bad = cfg.rscp.steady_state;
  bad(6) = -1.0;
  bad(7) = 0.0;
  CHECK_THROWS_AS(rscp_deriv(bad, cfg.rscp.nominal_duty, 0.0, cfg), DomainError);
}

TEST_CASE("reactor TV equals TI at t = 0 and decays the kinetics afterwards") {
  const auto ti = preset("rscp-ti");
  const auto tv = preset("rscp-tv");
  const Vector s = ti.rscp.steady_state;
  const Vector q = ti.rscp.nominal_duty;
  CHECK(rscp_deriv(s, q, 0.0, tv) == rscp_deriv(s, q, 0.0, ti));
  CHECK(catalyst_activity(tv, 10.0) == doctest::Approx(std::exp(-0.1)));
  CHECK(catalyst_activity(ti, 10.0) == 1.0);
  // A -> B consumption in CSTR-1 slows down as the catalyst deactivates
  CHECK(rscp_deriv(s, q, 50.0, tv)(0) > rscp_deriv(s, q, 0.0, tv)(0));
}

TEST_CASE("reactor fixed point") {
  const auto cfg = preset("rscp-ti");
  const Vector xbar = rscp_fixed_point(cfg);
  CHECK(rscp_deriv(xbar, cfg.rscp.nominal_duty, 0.0, cfg).cwiseAbs().maxCoeff() < 1e-9);
  CHECK(check_termination(cfg, xbar, 0, EpisodeMode::Train) == Termination::Continue);
}

TEST_CASE("termination rules") {
  const auto cp = preset("cartpole-ti");
  CHECK(check_termination(cp, vec({0, 0, 0.35, 0}), 5, EpisodeMode::Train) == Termination::Angle);
  CHECK(check_termination(cp, vec({0, 0, 0.34, 0}), 5, EpisodeMode::Train) == Termination::Continue);
  CHECK(check_termination(cp, vec({10.5, 0, 0, 0}), 5, EpisodeMode::Train) == Termination::Position);
  CHECK(check_termination(cp, Vector::Zero(4), 20040, EpisodeMode::Train) == Termination::Horizon);
  CHECK(check_termination(cp, Vector::Zero(4), 20039, EpisodeMode::Train) == Termination::Continue);
  CHECK(check_termination(cp, Vector::Zero(4), 1000, EpisodeMode::Test) == Termination::Horizon);

  const auto rs = preset("rscp-ti");
  CHECK(check_termination(rs, rs.rscp.steady_state, 10, EpisodeMode::Test) == Termination::Continue);
  Vector hot = rs.rscp.steady_state;
  hot(5) = 720.0;
  CHECK(check_termination(rs, hot, 10, EpisodeMode::Test) == Termination::Temperature);
  Vector neg = rs.rscp.steady_state;
  neg(1) = -0.01;
  CHECK(check_termination(rs, neg, 10, EpisodeMode::Test) == Termination::Composition);
}

TEST_CASE("control box") {
  const auto rs = preset("rscp-ti");
  const Vector lo = control_lower(rs), hi = control_upper(rs);
  CHECK((hi - lo).minCoeff() == doctest::Approx(2e6));
  const Vector c = clip_control(rs, rs.rscp.nominal_duty.array() + 5e6);
  CHECK((c - hi).norm() == 0.0);
}
