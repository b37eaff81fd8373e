#pragma once

#include <string>
#include <string_view>

#include "bmk/numerics/matrix.hpp"

namespace bmk::sim {

enum class System { CartPole, Rscp };
enum class Variant { TimeInvariant, TimeVarying };

/// Table constants of the cart-pole benchmark.
struct CartPoleParams {
  double gravity = 10.0;     // m/s^2
  double cart_mass = 1.0;    // kg
  double pole_mass = 0.1;    // kg
  double half_length = 0.5;  // m
  double force_bound = 20.0; // N
  double mu_c_base = 0.0;    // cart friction
  double mu_p = 0.0;         // pole pivot friction
  double omega = 1.0;        // rad/s, TV modulation frequency
  double max_angle = 20.0 * 3.14159265358979323846 / 180.0;
  double max_position = 10.0;
};

/// Reactor-separator constants (corrected formulation).
struct RscpParams {
  double v1 = 1.0, v2 = 0.5, v3 = 1.0;  // m^3
  double f10 = 5.04, f20 = 5.04;        // m^3/h
  double fr = 50.4, fp = 5.04;          // m^3/h
  double t10 = 300.0, t20 = 300.0;      // K
  double xa10 = 1.0, xa20 = 1.0;
  double xb10 = 0.0, xb20 = 0.0;
  double k1 = 9.972e6, k2 = 9.36e6;     // 1/h
  double e1 = 5e4, e2 = 6e4;            // kJ/kmol
  double dh1 = -1.2e5, dh2 = -1.4e5;    // kJ/kmol
  double rho = 1000.0;                  // kg/m^3
  double cp = 4.2;                      // kJ/(kg K)
  double cm = 2.0;                      // kmol/m^3
  double dhvap_a = -3.53e4, dhvap_b = -1.57e4, dhvap_c = -4.07e4;  // kJ/kmol
  double alpha_a = 3.5, alpha_b = 1.0, alpha_c = 0.5;
  double gas_constant = 8.314;          // kJ/(kmol K)
  double deactivation_rate = 0.01;      // 1/h, TV catalyst modifier e^{-rate t}
  double duty_half_width = 1e6;         // kJ/h around the nominal duties
  double min_temperature = 250.0, max_temperature = 700.0;  // K
  Vector steady_state;                  // x_s, the tracking target
  Vector nominal_duty;                  // Q_s, zeroes the energy balances at x_s
};

struct SystemConfig {
  std::string name;
  System system = System::CartPole;
  Variant variant = Variant::TimeInvariant;
  double dt = 0.02;  // seconds (CartPole) or hours (RSCP)
  int train_horizon = 20040;
  int test_horizon = 1000;
  CartPoleParams cartpole;
  RscpParams rscp;

  int state_dim() const { return system == System::CartPole ? 4 : 9; }
  int control_dim() const { return system == System::CartPole ? 1 : 3; }
};

/// Named presets: cartpole-ti, cartpole-tv, rscp-ti, rscp-tv.
SystemConfig preset(std::string_view name);
bool is_preset_name(std::string_view name);

/// Cart friction coefficient at absolute episode time t.
double cart_friction(const SystemConfig& cfg, double t);
/// Multiplicative Arrhenius modifier at absolute episode time t (hours).
double catalyst_activity(const SystemConfig& cfg, double t);

Vector cartpole_deriv(const Vector& s, double force, double t, const SystemConfig& cfg);
/// Throws DomainError when the equilibrium denominator is not positive.
Vector rscp_deriv(const Vector& s, const Vector& q, double t, const SystemConfig& cfg);
Vector deriv(const SystemConfig& cfg, const Vector& s, const Vector& u, double t);

struct RecycleComposition {
  double xa, xb, xc;
};
RecycleComposition rscp_recycle(const RscpParams& p, double xa3, double xb3);

Vector control_lower(const SystemConfig& cfg);
Vector control_upper(const SystemConfig& cfg);
/// Control at the centre of the box: 0 N, or Q_s.
Vector nominal_control(const SystemConfig& cfg);
Vector clip_control(const SystemConfig& cfg, const Vector& u);

struct Step {
  Vector state;
  double time;
};
/// s' = s + dt * deriv(s, clip(u), t), t' = t + dt.
Step step_euler(const SystemConfig& cfg, const Vector& s, const Vector& u, double t);

enum class EpisodeMode { Train, Test };
enum class Termination { Continue, Angle, Position, Composition, Temperature, NonFinite, Horizon };
std::string to_string(Termination t);

Termination check_termination(const SystemConfig& cfg, const Vector& s, long step_index,
                              EpisodeMode mode);

/// Newton-refined fixed point of the TI reactor ODEs at Q = Q_s, started at x_s.
Vector rscp_fixed_point(const SystemConfig& cfg);

}  // namespace bmk::sim
