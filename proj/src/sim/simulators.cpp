#include "bmk/sim/simulators.hpp"

#include <cmath>
#include <stdexcept>
#include <tuple>
#include <utility>

namespace bmk::sim {
namespace {

double sgn(double v) { return (v > 0.0) - (v < 0.0); }

// Energy-balance terms of the three vessels without the duty contribution.
Vector rscp_deriv_impl(const Vector& s, const Vector& q, double t, const SystemConfig& cfg) {
  const RscpParams& p = cfg.rscp;
  const double xa1 = s(0), xb1 = s(1), t1 = s(2);
  const double xa2 = s(3), xb2 = s(4), t2 = s(5);
  const double xa3 = s(6), xb3 = s(7), t3 = s(8);

  const auto rec = rscp_recycle(p, xa3, xb3);
  const double f1 = p.f10 + p.fr;
  const double f2 = f1 + p.f20;
  const double activity = catalyst_activity(cfg, t);
  const double r = p.gas_constant;
  const double r11 = activity * p.k1 * std::exp(-p.e1 / (r * t1));
  const double r21 = activity * p.k2 * std::exp(-p.e2 / (r * t1));
  const double r12 = activity * p.k1 * std::exp(-p.e1 / (r * t2));
  const double r22 = activity * p.k2 * std::exp(-p.e2 / (r * t2));
  const double rcp = p.rho * p.cp;
  const double beta1 = -p.dh1 * p.cm / rcp;
  const double beta2 = -p.dh2 * p.cm / rcp;

  Vector d(9);
  d(0) = p.f10 / p.v1 * (p.xa10 - xa1) + p.fr / p.v1 * (rec.xa - xa1) - r11 * xa1;
  d(1) = p.f10 / p.v1 * (p.xb10 - xb1) + p.fr / p.v1 * (rec.xb - xb1) + r11 * xa1 - r21 * xb1;
  d(2) = p.f10 / p.v1 * (p.t10 - t1) + p.fr / p.v1 * (t3 - t1) + beta1 * r11 * xa1 +
         beta2 * r21 * xb1 + q(0) / (rcp * p.v1);

  d(3) = f1 / p.v2 * (xa1 - xa2) + p.f20 / p.v2 * (p.xa20 - xa2) - r12 * xa2;
  d(4) = f1 / p.v2 * (xb1 - xb2) + p.f20 / p.v2 * (p.xb20 - xb2) + r12 * xa2 - r22 * xb2;
  d(5) = f1 / p.v2 * (t1 - t2) + p.f20 / p.v2 * (p.t20 - t2) + beta1 * r12 * xa2 +
         beta2 * r22 * xb2 + q(1) / (rcp * p.v2);

  const double out = p.fr + p.fp;
  d(6) = f2 / p.v3 * (xa2 - xa3) - out / p.v3 * (rec.xa - xa3);
  d(7) = f2 / p.v3 * (xb2 - xb3) - out / p.v3 * (rec.xb - xb3);
  d(8) = f2 / p.v3 * (t2 - t3) + q(2) / (rcp * p.v3) +
         out * p.cm / (rcp * p.v3) *
             (rec.xa * p.dhvap_a + rec.xb * p.dhvap_b + rec.xc * p.dhvap_c);
  return d;
}

RscpParams make_rscp_params() {
  RscpParams p;
  p.steady_state.resize(9);
  p.steady_state << 0.18, 0.67, 480.32, 0.20, 0.65, 472.79, 0.07, 0.67, 474.89;
  // Q_s: the duties that zero the three energy balances at x_s.
  SystemConfig tmp;
  tmp.system = System::Rscp;
  tmp.rscp = p;
  const Vector drift = rscp_deriv_impl(p.steady_state, Vector::Zero(3), 0.0, tmp);
  const double rcp = p.rho * p.cp;
  p.nominal_duty.resize(3);
  p.nominal_duty << -drift(2) * rcp * p.v1, -drift(5) * rcp * p.v2, -drift(8) * rcp * p.v3;
  return p;
}

}  // namespace

bool is_preset_name(std::string_view name) {
  return name == "cartpole-ti" || name == "cartpole-tv" || name == "rscp-ti" ||
         name == "rscp-tv";
}

SystemConfig preset(std::string_view name) {
  SystemConfig cfg;
  cfg.name = std::string(name);
  if (name == "cartpole-ti" || name == "cartpole-tv") {
    cfg.system = System::CartPole;
    cfg.dt = 0.02;
    if (name == "cartpole-tv") {
      cfg.variant = Variant::TimeVarying;
      cfg.cartpole.mu_c_base = 5e-4;
      cfg.cartpole.mu_p = 2e-6;
      cfg.cartpole.omega = 1.0;
    }
    return cfg;
  }
  if (name == "rscp-ti" || name == "rscp-tv") {
    cfg.system = System::Rscp;
    cfg.dt = 0.005;  // 18 s in hours
    cfg.variant = name == "rscp-tv" ? Variant::TimeVarying : Variant::TimeInvariant;
    cfg.rscp = make_rscp_params();
    return cfg;
  }
  throw std::invalid_argument("unknown preset '" + std::string(name) +
                              "' (expected cartpole-ti, cartpole-tv, rscp-ti, rscp-tv)");
}

double cart_friction(const SystemConfig& cfg, double t) {
  const auto& p = cfg.cartpole;
  if (cfg.variant == Variant::TimeVarying) return p.mu_c_base + std::sin(p.omega * t);
  return p.mu_c_base;
}

double catalyst_activity(const SystemConfig& cfg, double t) {
  if (cfg.variant == Variant::TimeVarying) return std::exp(-cfg.rscp.deactivation_rate * t);
  return 1.0;
}

Vector cartpole_deriv(const Vector& s, double force, double t, const SystemConfig& cfg) {
  const auto& p = cfg.cartpole;
  const double theta = s(2), theta_dot = s(3), x_dot = s(1);
  const double mu_c = cart_friction(cfg, t);
  const double total = p.cart_mass + p.pole_mass;
  const double ml = p.pole_mass * p.half_length;
  const double sin_t = std::sin(theta), cos_t = std::cos(theta);

  // Friction-augmented cart-pole with cart Coulomb friction acting through the
  // normal force N. The sign of N is unknown before theta_dd is known, so the
  // angular equation is solved assuming N > 0 and re-solved if that fails.
  auto solve = [&](double n_sign) {
    const double fs = mu_c * sgn(n_sign * x_dot);
    const double num =
        p.gravity * sin_t +
        cos_t * ((-force - ml * theta_dot * theta_dot * (sin_t + fs * cos_t)) / total +
                 fs * p.gravity) -
        p.mu_p * theta_dot / ml;
    const double den =
        p.half_length * (4.0 / 3.0 - p.pole_mass * cos_t / total * (cos_t - fs));
    const double theta_dd = num / den;
    const double normal =
        total * p.gravity - ml * (theta_dd * sin_t + theta_dot * theta_dot * cos_t);
    return std::pair{theta_dd, normal};
  };
  auto [theta_dd, normal] = solve(1.0);
  if (normal < 0.0) std::tie(theta_dd, normal) = solve(-1.0);

  const double x_dd = (force + ml * (theta_dot * theta_dot * sin_t - theta_dd * cos_t) -
                       mu_c * normal * sgn(normal * x_dot)) /
                      total;
  Vector d(4);
  d << x_dot, x_dd, theta_dot, theta_dd;
  return d;
}

RecycleComposition rscp_recycle(const RscpParams& p, double xa3, double xb3) {
  const double xc3 = 1.0 - xa3 - xb3;
  const double den = p.alpha_a * xa3 + p.alpha_b * xb3 + p.alpha_c * xc3;
  if (!(den > 0.0)) {
    throw DomainError("rscp: non-positive equilibrium denominator (invalid composition)");
  }
  return {p.alpha_a * xa3 / den, p.alpha_b * xb3 / den, p.alpha_c * xc3 / den};
}

Vector rscp_deriv(const Vector& s, const Vector& q, double t, const SystemConfig& cfg) {
  if (s.size() != 9 || q.size() != 3) throw DimensionError("rscp_deriv: expected 9 states, 3 duties");
  return rscp_deriv_impl(s, q, t, cfg);
}

Vector deriv(const SystemConfig& cfg, const Vector& s, const Vector& u, double t) {
  if (cfg.system == System::CartPole) {
    if (s.size() != 4 || u.size() != 1) throw DimensionError("cartpole: expected 4 states, 1 force");
    return cartpole_deriv(s, u(0), t, cfg);
  }
  return rscp_deriv(s, u, t, cfg);
}

Vector control_lower(const SystemConfig& cfg) {
  if (cfg.system == System::CartPole) return Vector::Constant(1, -cfg.cartpole.force_bound);
  return cfg.rscp.nominal_duty.array() - cfg.rscp.duty_half_width;
}

Vector control_upper(const SystemConfig& cfg) {
  if (cfg.system == System::CartPole) return Vector::Constant(1, cfg.cartpole.force_bound);
  return cfg.rscp.nominal_duty.array() + cfg.rscp.duty_half_width;
}

Vector nominal_control(const SystemConfig& cfg) {
  if (cfg.system == System::CartPole) return Vector::Zero(1);
  return cfg.rscp.nominal_duty;
}

Vector clip_control(const SystemConfig& cfg, const Vector& u) {
  return u.cwiseMax(control_lower(cfg)).cwiseMin(control_upper(cfg));
}

Step step_euler(const SystemConfig& cfg, const Vector& s, const Vector& u, double t) {
  const Vector uc = clip_control(cfg, u);
  return {s + cfg.dt * deriv(cfg, s, uc, t), t + cfg.dt};
}

std::string to_string(Termination t) {
  switch (t) {
    case Termination::Continue: return "continue";
    case Termination::Angle: return "angle";
    case Termination::Position: return "position";
    case Termination::Composition: return "composition";
    case Termination::Temperature: return "temperature";
    case Termination::NonFinite: return "non-finite";
    case Termination::Horizon: return "horizon";
  }
  return "unknown";
}

Termination check_termination(const SystemConfig& cfg, const Vector& s, long step_index,
                              EpisodeMode mode) {
  if (!s.allFinite()) return Termination::NonFinite;
  if (cfg.system == System::CartPole) {
    if (std::abs(s(2)) > cfg.cartpole.max_angle) return Termination::Angle;
    if (std::abs(s(0)) > cfg.cartpole.max_position) return Termination::Position;
  } else {
    const auto& p = cfg.rscp;
    for (int vessel = 0; vessel < 3; ++vessel) {
      const double xa = s(3 * vessel), xb = s(3 * vessel + 1), temp = s(3 * vessel + 2);
      if (xa < 0.0 || xa > 1.0 || xb < 0.0 || xb > 1.0 || xa + xb > 1.0) {
        return Termination::Composition;
      }
      if (temp < p.min_temperature || temp > p.max_temperature) return Termination::Temperature;
    }
  }
  const long horizon = mode == EpisodeMode::Train ? cfg.train_horizon : cfg.test_horizon;
  if (step_index >= horizon) return Termination::Horizon;
  return Termination::Continue;
}

Vector rscp_fixed_point(const SystemConfig& cfg) {
  SystemConfig ti = cfg;
  ti.variant = Variant::TimeInvariant;
  const Vector q = cfg.rscp.nominal_duty;
  Vector x = cfg.rscp.steady_state;
  for (int it = 0; it < 50; ++it) {
    const Vector f = rscp_deriv(x, q, 0.0, ti);
    if (f.cwiseAbs().maxCoeff() < 1e-11) break;
    Matrix jac(9, 9);
    for (int j = 0; j < 9; ++j) {
      const double h = 1e-7 * std::max(1.0, std::abs(x(j)));
      Vector xp = x, xm = x;
      xp(j) += h;
      xm(j) -= h;
      jac.col(j) = (rscp_deriv(xp, q, 0.0, ti) - rscp_deriv(xm, q, 0.0, ti)) / (2.0 * h);
    }
    x -= jac.partialPivLu().solve(f);
  }
  return x;
}

}  // namespace bmk::sim
