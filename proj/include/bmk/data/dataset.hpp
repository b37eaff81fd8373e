#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "bmk/data/rng.hpp"
#include "bmk/numerics/matrix.hpp"
#include "bmk/sim/simulators.hpp"

namespace bmk::data {

inline constexpr int kLookback = 30;
inline constexpr int kHorizon = 30;
inline constexpr int kWindowLength = kLookback + kHorizon;
inline constexpr std::uint32_t kDatasetVersion = 1;

class FormatError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};
class IntegrityError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};
class ProgressError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Split : std::uint8_t { Train = 0, Val = 1, Test = 2 };
std::string to_string(Split s);

/// One simulated trajectory; row k holds the state at t = k dt and the control
/// applied from it.
struct Episode {
  Matrix states;    // rows x n
  Matrix controls;  // rows x m
  bool test = false;
  Eigen::Index rows() const { return states.rows(); }
};

struct WindowRef {
  std::uint32_t episode;
  std::uint32_t start;
  Split split;
};

/// Per-channel z-scoring statistics.
struct NormStats {
  Vector state_mean, state_std;
  Vector control_mean, control_std;

  Vector normalize_state(const Vector& x) const;
  Vector denormalize_state(const Vector& x) const;
  Vector normalize_control(const Vector& u) const;
  Vector denormalize_control(const Vector& u) const;
  Matrix normalize_states(const Matrix& rows) const;
  Matrix normalize_controls(const Matrix& rows) const;
};

struct Dataset {
  std::string preset;
  int state_dim = 0;
  int control_dim = 0;
  std::uint64_t seed = 0;
  std::uint64_t split_seed = 1;
  double dt = 0.0;
  std::vector<Episode> episodes;
  std::vector<WindowRef> windows;
  NormStats norm;

  std::size_t count(Split s) const;
  std::vector<std::size_t> indices(Split s) const;
  /// 60 x n raw states of window i.
  Matrix window_states(std::size_t i) const;
  /// 60 x m raw controls of window i.
  Matrix window_controls(std::size_t i) const;
  double start_time(std::size_t i) const;
};

bool operator==(const NormStats& a, const NormStats& b);
bool operator==(const Dataset& a, const Dataset& b);

Vector sample_excitation(const sim::SystemConfig& cfg, CounterRng& rng);
/// Reactor initial states are centred on `center` (the verified fixed point).
Vector sample_initial_state(const sim::SystemConfig& cfg, CounterRng& rng, const Vector& center);
Vector sample_initial_state(const sim::SystemConfig& cfg, CounterRng& rng);

struct GenerationTargets {
  std::size_t train_pool = 39900;
  std::size_t test = 4000;
  std::size_t max_episodes = 2000000;  // per split
  std::uint64_t split_seed = 1;
};

/// Rolls one episode under i.i.d. excitation until termination or horizon.
Episode simulate_episode(const sim::SystemConfig& cfg, std::uint64_t seed, std::uint64_t stream,
                         sim::EpisodeMode mode, const Vector& center);

Dataset generate_dataset(const sim::SystemConfig& cfg, const GenerationTargets& targets,
                         std::uint64_t seed);

/// Deterministic permutation of [0, n) seeded by split_seed (Fisher-Yates).
std::vector<std::size_t> split_permutation(std::size_t n, std::uint64_t split_seed);

/// Statistics over the rows of the training windows, each row counted once
/// per window containing it.
NormStats compute_norm_stats(const Dataset& ds);

void write_dataset(const Dataset& ds, const std::string& path);
Dataset read_dataset(const std::string& path);
/// One line per window row; returns the number of data rows written.
std::size_t export_csv(const Dataset& ds, const std::string& path);

}  // namespace bmk::data
