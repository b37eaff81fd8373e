#include <algorithm>
#include <cmath>

#include "bmk/data/dataset.hpp"

namespace bmk::data {

namespace {

constexpr std::uint64_t kTestStreamBase = 1ULL << 40;

const Vector& rscp_half_widths() {
  static const Vector rho = [] {
    Vector r(9);
    r << 0.05, 0.05, 10.0, 0.05, 0.05, 10.0, 0.02, 0.05, 10.0;
    return r;
  }();
  return rho;
}

}  // namespace

std::string to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "unknown";
}

Vector NormStats::normalize_state(const Vector& x) const {
  return (x - state_mean).cwiseQuotient(state_std);
}
Vector NormStats::denormalize_state(const Vector& x) const {
  return x.cwiseProduct(state_std) + state_mean;
}
Vector NormStats::normalize_control(const Vector& u) const {
  return (u - control_mean).cwiseQuotient(control_std);
}
Vector NormStats::denormalize_control(const Vector& u) const {
  return u.cwiseProduct(control_std) + control_mean;
}
Matrix NormStats::normalize_states(const Matrix& rows) const {
  return (rows.rowwise() - state_mean.transpose()).array().rowwise() /
         state_std.transpose().array();
}
Matrix NormStats::normalize_controls(const Matrix& rows) const {
  return (rows.rowwise() - control_mean.transpose()).array().rowwise() /
         control_std.transpose().array();
}

std::size_t Dataset::count(Split s) const {
  return static_cast<std::size_t>(
      std::count_if(windows.begin(), windows.end(), [s](const WindowRef& w) { return w.split == s; }));
}

std::vector<std::size_t> Dataset::indices(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    if (windows[i].split == s) out.push_back(i);
  }
  return out;
}

Matrix Dataset::window_states(std::size_t i) const {
  const auto& w = windows.at(i);
  return episodes.at(w.episode).states.middleRows(w.start, kWindowLength);
}

Matrix Dataset::window_controls(std::size_t i) const {
  const auto& w = windows.at(i);
  return episodes.at(w.episode).controls.middleRows(w.start, kWindowLength);
}

double Dataset::start_time(std::size_t i) const { return windows.at(i).start * dt; }

bool operator==(const NormStats& a, const NormStats& b) {
  return a.state_mean == b.state_mean && a.state_std == b.state_std &&
         a.control_mean == b.control_mean && a.control_std == b.control_std;
}

bool operator==(const Dataset& a, const Dataset& b) {
  if (a.preset != b.preset || a.state_dim != b.state_dim || a.control_dim != b.control_dim ||
      a.seed != b.seed || a.split_seed != b.split_seed || a.dt != b.dt ||
      a.episodes.size() != b.episodes.size() || a.windows.size() != b.windows.size() ||
      !(a.norm == b.norm)) {
    return false;
  }
  for (std::size_t e = 0; e < a.episodes.size(); ++e) {
    const auto &x = a.episodes[e], &y = b.episodes[e];
    if (x.test != y.test || x.states != y.states || x.controls != y.controls) return false;
  }
  for (std::size_t i = 0; i < a.windows.size(); ++i) {
    const auto &x = a.windows[i], &y = b.windows[i];
    if (x.episode != y.episode || x.start != y.start || x.split != y.split) return false;
  }
  return true;
}

Vector sample_excitation(const sim::SystemConfig& cfg, CounterRng& rng) {
  const Vector lo = sim::control_lower(cfg), hi = sim::control_upper(cfg);
  Vector u(lo.size());
  for (Eigen::Index j = 0; j < u.size(); ++j) u(j) = rng.uniform(lo(j), hi(j));
  return u;
}

Vector sample_initial_state(const sim::SystemConfig& cfg, CounterRng& rng, const Vector& center) {
  if (cfg.system == sim::System::CartPole) {
    Vector s = Vector::Zero(4);
    s(0) = rng.uniform(-4.0, 4.0);
    s(2) = rng.uniform(-0.1, 0.1);
    return s;
  }
  const Vector& rho = rscp_half_widths();
  Vector s(9);
  for (int i = 0; i < 9; ++i) s(i) = rng.uniform(center(i) - rho(i), center(i) + rho(i));
  return s;
}

Vector sample_initial_state(const sim::SystemConfig& cfg, CounterRng& rng) {
  if (cfg.system == sim::System::CartPole) return sample_initial_state(cfg, rng, Vector::Zero(4));
  return sample_initial_state(cfg, rng, sim::rscp_fixed_point(cfg));
}

Episode simulate_episode(const sim::SystemConfig& cfg, std::uint64_t seed, std::uint64_t stream,
                         sim::EpisodeMode mode, const Vector& center) {
  CounterRng rng(seed, stream);
  Vector s = sample_initial_state(cfg, rng, center);
  const int horizon = mode == sim::EpisodeMode::Train ? cfg.train_horizon : cfg.test_horizon;
  std::vector<Vector> xs, us;
  double t = 0.0;
  for (long k = 0;; ++k) {
    if (sim::check_termination(cfg, s, k, mode) != sim::Termination::Continue) break;
    const Vector u = sample_excitation(cfg, rng);
    sim::Step next;
    try {
      next = sim::step_euler(cfg, s, u, t);
    } catch (const DomainError&) {
      break;
    }
    xs.push_back(s);
    us.push_back(u);
    s = next.state;
    t = next.time;
    if (static_cast<int>(xs.size()) >= horizon) break;
  }
  Episode ep;
  ep.test = mode == sim::EpisodeMode::Test;
  ep.states.resize(static_cast<Eigen::Index>(xs.size()), cfg.state_dim());
  ep.controls.resize(static_cast<Eigen::Index>(us.size()), cfg.control_dim());
  for (std::size_t k = 0; k < xs.size(); ++k) {
    ep.states.row(static_cast<Eigen::Index>(k)) = xs[k].transpose();
    ep.controls.row(static_cast<Eigen::Index>(k)) = us[k].transpose();
  }
  return ep;
}

std::vector<std::size_t> split_permutation(std::size_t n, std::uint64_t split_seed) {
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  CounterRng rng(split_seed, 0);
  for (std::size_t i = n; i > 1; --i) {
    std::swap(perm[i - 1], perm[rng.below(i)]);
  }
  return perm;
}

namespace {

void collect(Dataset& ds, const sim::SystemConfig& cfg, std::size_t target, std::size_t max_episodes,
             std::uint64_t stream_base, sim::EpisodeMode mode, Split label, const Vector& center) {
  std::size_t have = 0;
  for (std::size_t e = 0; have < target; ++e) {
    if (e >= max_episodes) {
      throw ProgressError("only " + std::to_string(have) + " of " + std::to_string(target) + " " +
                          to_string(label) + " windows after " + std::to_string(max_episodes) +
                          " episodes");
    }
    Episode ep = simulate_episode(cfg, ds.seed, stream_base + e, mode, center);
    const Eigen::Index n = ep.rows() - kWindowLength + 1;
    if (n <= 0) continue;
    const auto idx = static_cast<std::uint32_t>(ds.episodes.size());
    for (Eigen::Index s = 0; s < n && have < target; ++s, ++have) {
      ds.windows.push_back({idx, static_cast<std::uint32_t>(s), label});
    }
    ds.episodes.push_back(std::move(ep));
  }
}

}  // namespace

Dataset generate_dataset(const sim::SystemConfig& cfg, const GenerationTargets& targets,
                         std::uint64_t seed) {
  Dataset ds;
  ds.preset = cfg.name;
  ds.state_dim = cfg.state_dim();
  ds.control_dim = cfg.control_dim();
  ds.seed = seed;
  ds.split_seed = targets.split_seed;
  ds.dt = cfg.dt;
  const Vector center =
      cfg.system == sim::System::Rscp ? sim::rscp_fixed_point(cfg) : Vector::Zero(cfg.state_dim());

  collect(ds, cfg, targets.train_pool, targets.max_episodes, 0, sim::EpisodeMode::Train, Split::Train,
          center);
  const std::size_t pool = ds.windows.size();
  const auto perm = split_permutation(pool, targets.split_seed);
  const auto n_train = static_cast<std::size_t>(std::llround(0.8 * static_cast<double>(pool)));
  for (std::size_t i = n_train; i < pool; ++i) ds.windows[perm[i]].split = Split::Val;

  collect(ds, cfg, targets.test, targets.max_episodes, kTestStreamBase, sim::EpisodeMode::Test,
          Split::Test, center);
  ds.norm = compute_norm_stats(ds);
  return ds;
}

NormStats compute_norm_stats(const Dataset& ds) {
  const int n = ds.state_dim, m = ds.control_dim;
  // weight[e][r] = number of training windows covering row r of episode e
  std::vector<std::vector<double>> weight(ds.episodes.size());
  for (const auto& w : ds.windows) {
    if (w.split != Split::Train) continue;
    auto& v = weight[w.episode];
    if (v.empty()) v.assign(static_cast<std::size_t>(ds.episodes[w.episode].rows()) + 1, 0.0);
    v[w.start] += 1.0;
    v[w.start + kWindowLength] -= 1.0;
  }
  for (auto& v : weight) {
    for (std::size_t r = 1; r < v.size(); ++r) v[r] += v[r - 1];
  }

  auto moments = [&](auto rows_of, int dim, Vector& mean, Vector& sd) {
    Eigen::Matrix<long double, Eigen::Dynamic, 1> sum = Eigen::Matrix<long double, Eigen::Dynamic, 1>::Zero(dim);
    long double total = 0;
    for (std::size_t e = 0; e < ds.episodes.size(); ++e) {
      const Matrix& rows = rows_of(ds.episodes[e]);
      for (std::size_t r = 0; r + 1 < weight[e].size(); ++r) {
        if (weight[e][r] == 0.0) continue;
        total += weight[e][r];
        for (int j = 0; j < dim; ++j) sum(j) += weight[e][r] * rows(static_cast<Eigen::Index>(r), j);
      }
    }
    if (total == 0) throw std::invalid_argument("no training windows for normalization statistics");
    mean = (sum / total).cast<double>();
    Eigen::Matrix<long double, Eigen::Dynamic, 1> sq = Eigen::Matrix<long double, Eigen::Dynamic, 1>::Zero(dim);
    for (std::size_t e = 0; e < ds.episodes.size(); ++e) {
      const Matrix& rows = rows_of(ds.episodes[e]);
      for (std::size_t r = 0; r + 1 < weight[e].size(); ++r) {
        if (weight[e][r] == 0.0) continue;
        for (int j = 0; j < dim; ++j) {
          const long double d = rows(static_cast<Eigen::Index>(r), j) - mean(j);
          sq(j) += weight[e][r] * d * d;
        }
      }
    }
    sd = (sq / total).cwiseSqrt().cast<double>();
    for (int j = 0; j < dim; ++j) {
      if (!(sd(j) > 1e-12)) sd(j) = 1.0;
    }
  };

  NormStats st;
  moments([](const Episode& ep) -> const Matrix& { return ep.states; }, n, st.state_mean, st.state_std);
  moments([](const Episode& ep) -> const Matrix& { return ep.controls; }, m, st.control_mean,
          st.control_std);
  return st;
}

}  // namespace bmk::data
