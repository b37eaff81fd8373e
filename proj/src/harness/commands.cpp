#include "bmk/harness/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <ostream>

#include "bmk/harness/svg.hpp"
#include "bmk/model/model.hpp"
#include "bmk/numerics/spectral.hpp"
#include "bmk/train/training.hpp"
#include "bmk/version.hpp"

namespace bmk::harness {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string join(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

std::string b2s(bool b) { return b ? "1" : "0"; }

void require_preset(const std::string& name) {
  if (!sim::is_preset_name(name)) {
    throw UsageError("unknown preset '" + name + "' (expected cartpole-ti, cartpole-tv, rscp-ti or rscp-tv)");
  }
}

void require_positive(long v, const char* what) {
  if (v <= 0) throw UsageError(std::string(what) + " must be positive");
}

data::Dataset load_dataset(const std::string& path) {
  require_file(path, "dataset");
  return data::read_dataset(path);
}

json summary_header(const std::string& command) {
  return {{"format_version", kTableVersion}, {"command", command}, {"code_version", code_version()}};
}

void finish(const std::string& out, json& summary, std::ostream& log) {
  write_json(join(out, "summary.json"), summary);
  log << "wrote " << join(out, "summary.json") << '\n';
}

void figure(const std::string& path, const std::vector<Series>& series, const FigureStyle& style, std::ostream& log) {
  if (!emit_svg(path, series, style)) log << "warning: no data for " << path << ", figure skipped\n";
}

std::vector<double> column(const std::vector<train::EpochRecord>& e, double train::EpochRecord::*field) {
  std::vector<double> v;
  for (const auto& r : e) v.push_back(r.*field);
  return v;
}

struct ControllerEntry {
  std::string path;
  std::string controller;
};

ControllerEntry parse_entry(const std::string& raw, const std::string& fallback) {
  const auto at = raw.rfind('@');
  if (at == std::string::npos) return {raw, fallback};
  return {raw.substr(0, at), raw.substr(at + 1)};
}

struct EpisodeSet {
  std::vector<mpc::EpisodeLog> logs;
  std::vector<std::string> failures;  // empty string when the episode ran to the end
};

EpisodeSet run_episodes(const sim::SystemConfig& sys, mpc::MpcController& ctrl, int episodes, int steps, int lead,
                        std::uint64_t seed, std::ostream& log) {
  EpisodeSet set;
  for (int e = 0; e < episodes; ++e) {
    mpc::EpisodeOptions opt;
    opt.steps = steps;
    opt.lead = lead;
    opt.initial_state = mpc::mpc_initial_state(sys, seed, e);
    try {
      auto ep = mpc::run_episode(sys, ctrl, opt);
      const bool truncated = static_cast<int>(ep.records.size()) < steps;
      set.failures.push_back(truncated ? "terminated: " + sim::to_string(ep.termination) : "");
      log << "  episode " << e << " (" << ep.controller << ", d=" << lead << "): log10 cost "
          << format_number(ep.final_log_cost()) << ", " << ep.solver_calls << " solves"
          << (truncated ? ", " + set.failures.back() : "") << '\n';
      set.logs.push_back(std::move(ep));
    } catch (const std::exception& ex) {
      mpc::EpisodeLog empty;
      empty.controller = mpc::controller_name(ctrl.config());
      empty.lead = lead;
      empty.initial_state = opt.initial_state;
      set.logs.push_back(std::move(empty));
      set.failures.push_back(std::string("error: ") + ex.what());
      log << "  episode " << e << " failed: " << ex.what() << '\n';
    }
  }
  return set;
}

std::vector<std::vector<double>> running_averages(const EpisodeSet& set) {
  std::vector<std::vector<double>> runs;
  for (const auto& ep : set.logs) {
    std::vector<double> r;
    for (const auto& rec : ep.records) r.push_back(rec.running_average);
    runs.push_back(std::move(r));
  }
  return runs;
}

std::vector<double> final_log_costs(const EpisodeSet& set) {
  std::vector<double> v;
  for (std::size_t e = 0; e < set.logs.size(); ++e) {
    if (set.failures[e].empty()) v.push_back(set.logs[e].final_log_cost());
  }
  return v;
}

sim::SystemConfig resolve_system(const std::string& preset, const LoadedCheckpoint& ck, const std::string& ckpt) {
  std::string name = preset;
  if (name.empty()) name = ck.meta.value("preset", std::string());
  if (name.empty()) throw UsageError("no preset given and checkpoint " + ckpt + " has no sidecar naming one");
  require_preset(name);
  return sim::preset(name);
}

data::NormStats resolve_norm(const std::string& norm_path, const LoadedCheckpoint& ck, const std::string& ckpt) {
  if (!norm_path.empty()) {
    require_file(norm_path, "normalization file");
    const json j = read_json(norm_path);
    return norm_from_json(j.contains("norm") ? j.at("norm") : j);
  }
  if (!ck.meta.contains("norm")) {
    throw UsageError("checkpoint " + ckpt + " has no normalization statistics in " + sidecar_path(ckpt) +
                     "; pass --norm");
  }
  return norm_from_json(ck.meta.at("norm"));
}

}  // namespace

std::string sidecar_path(const std::string& ckpt) { return fs::path(ckpt).replace_extension(".json").string(); }

LoadedCheckpoint load_checkpoint(const std::string& path) {
  require_file(path, "checkpoint");
  LoadedCheckpoint ck;
  ck.params = model::read_checkpoint(path);
  ck.meta = json::object();
  const auto side = sidecar_path(path);
  if (fs::is_regular_file(side)) ck.meta = read_json(side);
  return ck;
}

std::vector<std::string> episode_columns(int n, int m) {
  std::vector<std::string> c = {"episode", "controller", "lead", "step", "t"};
  for (int j = 0; j < m; ++j) c.push_back("u" + std::to_string(j));
  for (int i = 0; i < n; ++i) c.push_back("x" + std::to_string(i));
  for (const char* s : {"stage_cost", "running_avg_cost", "solved", "scp_iterations", "scp_accepted", "qp_iterations",
                        "step_seconds", "spectral_radius", "gershgorin_straddle", "bundle_checksum"}) {
    c.emplace_back(s);
  }
  return c;
}

std::vector<std::vector<std::string>> episode_rows(const mpc::EpisodeLog& log, int episode) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : log.records) {
    std::vector<std::string> c = {std::to_string(episode), log.controller, std::to_string(log.lead),
                                  std::to_string(r.step), format_number(r.time)};
    for (Eigen::Index j = 0; j < r.control.size(); ++j) c.push_back(format_number(r.control(j)));
    for (Eigen::Index i = 0; i < r.state.size(); ++i) c.push_back(format_number(r.state(i)));
    c.push_back(format_number(r.stage_cost));
    c.push_back(format_number(r.running_average));
    c.push_back(b2s(r.solved));
    c.push_back(std::to_string(r.scp_iterations));
    c.push_back(std::to_string(r.scp_accepted));
    c.push_back(std::to_string(r.qp_iterations));
    c.push_back(format_number(r.seconds));
    c.push_back(format_number(r.spectral_radius));
    c.push_back(b2s(r.gershgorin_straddles));
    c.push_back(std::to_string(r.bundle_hash));
    rows.push_back(std::move(c));
  }
  return rows;
}

// ---- gen-data -------------------------------------------------------------

json cmd_gen_data(const GenDataSpec& spec, std::ostream& log) {
  require_preset(spec.preset);
  require_positive(static_cast<long>(spec.train_pool), "train_pool");
  require_positive(static_cast<long>(spec.test), "test");
  ensure_directory(spec.out);
  const auto sys = sim::preset(spec.preset);
  data::GenerationTargets targets;
  targets.train_pool = spec.train_pool;
  targets.test = spec.test;
  const auto start = std::chrono::steady_clock::now();
  log << "generating " << spec.preset << " (seed " << spec.seed << ")\n";
  const auto ds = data::generate_dataset(sys, targets, spec.seed);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const auto path = join(spec.out, "dataset.bkds");
  data::write_dataset(ds, path);

  json s = summary_header("gen-data");
  s["preset"] = spec.preset;
  s["seed"] = spec.seed;
  s["split_seed"] = ds.split_seed;
  s["dataset"] = path;
  s["episodes"] = ds.episodes.size();
  s["windows"] = {{"train", ds.count(data::Split::Train)},
                  {"val", ds.count(data::Split::Val)},
                  {"test", ds.count(data::Split::Test)}};
  s["norm"] = norm_to_json(ds.norm);
  s["seconds"] = secs;

  CsvTable counts(join(spec.out, "windows.csv"), {"split", "windows"});
  const Provenance prov{spec.preset, "-", spec.seed};
  for (auto sp : {data::Split::Train, data::Split::Val, data::Split::Test}) {
    counts.row(prov, {data::to_string(sp), std::to_string(ds.count(sp))});
  }
  if (spec.csv) {
    const auto csv = join(spec.out, "windows_rows.csv");
    s["csv_rows"] = data::export_csv(ds, csv);
    s["csv"] = csv;
  }
  log << "windows: train " << ds.count(data::Split::Train) << ", val " << ds.count(data::Split::Val) << ", test "
      << ds.count(data::Split::Test) << " (" << format_number(secs) << " s)\n";
  finish(spec.out, s, log);
  return s;
}

// ---- train ----------------------------------------------------------------

json cmd_train(const TrainSpec& spec, std::ostream& log) {
  model::ModelKind kind;
  try {
    kind = model::model_kind_from_string(spec.model);
  } catch (const std::exception&) {
    throw UsageError("unknown model '" + spec.model + "' (expected linear or bilinear)");
  }
  require_positive(spec.epochs, "epochs");
  require_positive(spec.batch_size, "batch_size");
  require_positive(spec.lr_step, "lr_step");
  if (!(spec.lr > 0.0)) throw UsageError("lr must be positive");
  const auto full = load_dataset(spec.data);
  ensure_directory(spec.out);
  const auto ds = limit_windows(full, spec.limit_train, spec.limit_val, spec.limit_test);

  train::TrainConfig cfg;
  cfg.epochs = spec.epochs;
  cfg.lr = spec.lr;
  cfg.weight_decay = spec.weight_decay;
  cfg.batch_size = spec.batch_size;
  cfg.lr_step = spec.lr_step;
  cfg.lr_gamma = spec.lr_gamma;
  cfg.clip_norm = spec.clip_norm;
  cfg.seed = spec.seed;
  cfg.test_every = spec.test_every;

  auto params = model::init_params(model::default_hyper(ds.preset, kind), spec.seed);
  log << "training " << spec.model << " on " << ds.preset << ": " << ds.count(data::Split::Train) << " train / "
      << ds.count(data::Split::Val) << " val / " << ds.count(data::Split::Test) << " test windows, "
      << params.scalar_count() << " parameters\n";
  const auto result = train::train(ds, params, cfg, [&](const train::EpochRecord& e) {
    if (spec.quiet) return;
    if (e.epoch % 10 == 0 || e.epoch == spec.epochs - 1) {
      log << "  epoch " << e.epoch << " train " << format_number(e.train_loss) << " val "
          << format_number(e.val_loss) << " test " << format_number(e.test_mse) << " |G| "
          << format_number(e.g_norm) << " (" << format_number(e.wall_seconds) << " s)\n";
    }
  });
  const auto sel = train::selection_metrics(result.log);
  const auto& epochs = result.log.epochs;

  auto save = [&](const model::ModelParams& p, const std::string& stem, int epoch, double val) {
    const auto ck = join(spec.out, stem + ".bkcp");
    model::write_checkpoint(p, ck);
    train::write_checkpoint_sidecar(sidecar_path(ck), p, epoch, val, spec.seed, full.seed, ds.preset);
    json meta = read_json(sidecar_path(ck));
    meta["norm"] = norm_to_json(ds.norm);
    meta["selection"] = {{"best", sel.best}, {"mean50", sel.mean50}, {"best_epoch", sel.best_epoch},
                         {"short_run", sel.short_run}};
    meta["code_version"] = code_version();
    write_json(sidecar_path(ck), meta);
    return ck;
  };
  const int best = result.log.best_epoch;
  const auto best_path = save(result.best_params, "best", best, epochs.at(static_cast<std::size_t>(best)).val_loss);
  const auto final_path = save(result.final_params, "final", epochs.back().epoch, epochs.back().val_loss);

  const Provenance prov{ds.preset, spec.model, spec.seed};
  CsvTable table(join(spec.out, "train_log.csv"),
                 {"epoch", "lr", "train_loss", "val_loss", "test_mse", "g_norm", "max_grad_norm", "wall_seconds"});
  for (const auto& e : epochs) {
    table.row(prov, {std::to_string(e.epoch), format_number(e.lr), format_number(e.train_loss),
                     format_number(e.val_loss), format_number(e.test_mse), format_number(e.g_norm),
                     format_number(e.max_grad_norm), format_number(e.wall_seconds)});
  }

  std::vector<double> ep_x, test_x, test_y;
  for (const auto& e : epochs) {
    ep_x.push_back(e.epoch);
    if (std::isfinite(e.test_mse)) {
      test_x.push_back(e.epoch);
      test_y.push_back(e.test_mse);
    }
  }
  figure(join(spec.out, "loss_curve.svg"),
         {{"train loss", ep_x, column(epochs, &train::EpochRecord::train_loss), {}},
          {"val loss", ep_x, column(epochs, &train::EpochRecord::val_loss), {}},
          {"test MSE", test_x, test_y, {}}},
         {ds.preset + " " + spec.model, "epoch", "loss", false, true}, log);

  json s = summary_header("train");
  s["preset"] = ds.preset;
  s["model"] = spec.model;
  s["seed"] = spec.seed;
  s["windows"] = {{"train", ds.count(data::Split::Train)},
                  {"val", ds.count(data::Split::Val)},
                  {"test", ds.count(data::Split::Test)}};
  s["initial_train_loss"] = result.log.initial_train_loss;
  s["final_train_loss"] = epochs.back().train_loss;
  s["best_epoch"] = best;
  s["best_val_loss"] = epochs.at(static_cast<std::size_t>(best)).val_loss;
  s["test_mse_best"] = sel.best;
  s["test_mse_mean50"] = sel.mean50;
  s["short_run"] = sel.short_run;
  s["g_norm_final"] = epochs.back().g_norm;
  s["checkpoints"] = {{"best", best_path}, {"final", final_path}};
  finish(spec.out, s, log);
  return s;
}

// ---- eval-forecast --------------------------------------------------------

json cmd_eval_forecast(const EvalForecastSpec& spec, std::ostream& log) {
  if (spec.ckpt.empty()) throw UsageError("at least one --ckpt is required");
  std::vector<LoadedCheckpoint> cks;
  for (const auto& path : spec.ckpt) cks.push_back(load_checkpoint(path));
  const auto full = load_dataset(spec.data);
  const auto ds = limit_windows(full, 0, 0, spec.limit_test);
  ensure_directory(spec.out);

  CsvTable table(join(spec.out, "forecast.csv"), {"checkpoint", "cell", "metric", "value", "test_windows"});
  CsvTable per_step(join(spec.out, "forecast_per_step.csv"), {"checkpoint", "cell", "step", "mse"});
  std::vector<Series> curves;
  json rows = json::array();
  const auto test = ds.indices(data::Split::Test);
  for (std::size_t c = 0; c < cks.size(); ++c) {
    const auto& p = cks[c].params;
    const std::string model_name = model::to_string(p.hyper.kind);
    const std::uint64_t seed = cks[c].meta.value("train_seed", std::uint64_t{0});
    const Provenance prov{ds.preset, model_name, seed};
    if (p.hyper.state_dim != ds.state_dim || p.hyper.control_dim != ds.control_dim) {
      throw UsageError("checkpoint " + spec.ckpt[c] + " does not match the dataset dimensions");
    }
    std::vector<double> step_err(static_cast<std::size_t>(p.hyper.horizon), 0.0);
    for (auto i : test) {
      const auto smp = train::make_sample(ds, i);
      const auto ev = model::evaluate_window(p, smp.x, smp.u, false);
      for (int k = 0; k < p.hyper.horizon; ++k) {
        step_err[static_cast<std::size_t>(k)] +=
            (ev.predicted.row(k) - smp.x.row(p.hyper.lookback + k)).squaredNorm() / p.hyper.state_dim;
      }
    }
    Series curve{spec.ckpt[c], {}, {}, {}};
    for (int k = 0; k < p.hyper.horizon; ++k) {
      const double mse = step_err[static_cast<std::size_t>(k)] / static_cast<double>(test.size());
      per_step.row(prov, {spec.ckpt[c], ds.preset, std::to_string(k + 1), format_number(mse)});
      curve.x.push_back(k + 1);
      curve.y.push_back(mse);
    }
    curves.push_back(std::move(curve));

    const double best = train::evaluate_forecast(p, ds, data::Split::Test);
    const double mean50 = cks[c].meta.contains("selection") ? cks[c].meta["selection"].value("mean50", std::nan(""))
                                                             : std::nan("");
    table.row(prov, {spec.ckpt[c], ds.preset, "best", format_number(best), std::to_string(test.size())});
    table.row(prov, {spec.ckpt[c], ds.preset, "mean_50", format_number(mean50), std::to_string(test.size())});
    rows.push_back({{"checkpoint", spec.ckpt[c]}, {"model", model_name}, {"cell", ds.preset}, {"best", best},
                    {"mean_50", mean50}});
    log << spec.ckpt[c] << " (" << model_name << "): test MSE " << format_number(best) << '\n';
  }
  figure(join(spec.out, "forecast_per_step.svg"), curves,
         {"open-loop forecast error, " + ds.preset, "prediction step", "MSE (normalized)", false, true}, log);

  json s = summary_header("eval-forecast");
  s["cell"] = ds.preset;
  s["test_windows"] = test.size();
  s["rows"] = rows;
  finish(spec.out, s, log);
  return s;
}

// ---- run-mpc ----------------------------------------------------------------

json cmd_run_mpc(const RunMpcSpec& spec, std::ostream& log) {
  require_positive(spec.episodes, "episodes");
  require_positive(spec.steps, "steps");
  if (spec.lead < 0) throw UsageError("lead must be non-negative");
  const auto ck = load_checkpoint(spec.ckpt);
  const auto sys = resolve_system(spec.preset, ck, spec.ckpt);
  const auto norm = resolve_norm(spec.norm, ck, spec.ckpt);
  auto cfg = mpc::default_mpc_config(sys);
  try {
    mpc::set_controller(cfg, spec.controller);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (spec.lead + 1 > cfg.horizon) throw UsageError("lead must be smaller than the planning horizon");
  ensure_directory(spec.out);

  mpc::MpcController ctrl(ck.params, norm, cfg);
  log << "run-mpc " << sys.name << " " << mpc::controller_name(cfg) << " d=" << spec.lead << '\n';
  const auto set = run_episodes(sys, ctrl, spec.episodes, spec.steps, spec.lead, spec.seed, log);

  const std::string model_name = model::to_string(ck.params.hyper.kind);
  const Provenance prov{sys.name, model_name, spec.seed};
  CsvTable steps(join(spec.out, "episodes.csv"), episode_columns(sys.state_dim(), sys.control_dim()));
  CsvTable episodes(join(spec.out, "episode_summary.csv"),
                    {"episode", "controller", "lead", "steps", "termination", "final_log10_cost", "solver_calls",
                     "straddle_fraction", "mean_step_seconds", "monotone", "qp_flagged", "flag"});
  json per_episode = json::array();
  for (std::size_t e = 0; e < set.logs.size(); ++e) {
    const auto& ep = set.logs[e];
    for (const auto& r : episode_rows(ep, static_cast<int>(e))) steps.row(prov, r);
    episodes.row(prov, {std::to_string(e), ep.controller, std::to_string(ep.lead), std::to_string(ep.records.size()),
                        ep.records.size() == static_cast<std::size_t>(spec.steps) ? "horizon"
                                                                                   : sim::to_string(ep.termination),
                        format_number(ep.final_log_cost()), std::to_string(ep.solver_calls),
                        format_number(ep.straddle_fraction()), format_number(ep.mean_step_seconds()),
                        b2s(ep.monotone), std::to_string(ep.qp_flagged), "\"" + set.failures[e] + "\""});
    per_episode.push_back({{"episode", e},
                           {"steps", ep.records.size()},
                           {"final_log10_cost", ep.final_log_cost()},
                           {"solver_calls", ep.solver_calls},
                           {"straddle_fraction", ep.straddle_fraction()},
                           {"mean_step_seconds", ep.mean_step_seconds()},
                           {"monotone", ep.monotone},
                           {"flag", set.failures[e]}});
  }
  const auto bands = step_bands(running_averages(set));
  figure(join(spec.out, "running_cost.svg"),
         {{mpc::controller_name(cfg) + " (" + model_name + ")", bands.step, bands.mean, bands.half_width}},
         {sys.name + ", d = " + std::to_string(spec.lead), "step", "running-average cost", false, true}, log);

  const auto costs = final_log_costs(set);
  const auto [mean, sd] = mean_std(costs);
  json s = summary_header("run-mpc");
  s["preset"] = sys.name;
  s["model"] = model_name;
  s["controller"] = mpc::controller_name(cfg);
  s["lead"] = spec.lead;
  s["seed"] = spec.seed;
  s["episodes"] = per_episode;
  s["mean_final_log10_cost"] = mean;
  s["std_final_log10_cost"] = sd;
  s["completed_episodes"] = costs.size();
  log << "mean log10 cost " << format_number(mean) << " +- " << format_number(sd) << " over " << costs.size()
      << " completed episodes\n";
  finish(spec.out, s, log);
  return s;
}

// ---- lead-sweep -----------------------------------------------------------

json cmd_lead_sweep(const LeadSweepSpec& spec, std::ostream& log) {
  if (spec.ckpt.empty()) throw UsageError("at least one --ckpt is required");
  if (spec.lead.empty()) throw UsageError("at least one lead value is required");
  require_positive(spec.episodes, "episodes");
  require_positive(spec.steps, "steps");
  for (int d : spec.lead) {
    if (d < 0 || d + 1 > 30) throw UsageError("lead values must lie in [0, 29]");
  }
  struct Entry {
    ControllerEntry id;
    LoadedCheckpoint ck;
    std::string label;
  };
  std::vector<Entry> entries;
  for (const auto& raw : spec.ckpt) {
    auto id = parse_entry(raw, "");
    auto ck = load_checkpoint(id.path);
    if (id.controller.empty()) id.controller = ck.params.hyper.kind == model::ModelKind::Linear ? "linear" : spec.controller;
    const std::string label = model::to_string(ck.params.hyper.kind) + "/" + id.controller;
    entries.push_back({id, std::move(ck), label});
  }
  const auto sys = resolve_system(spec.preset, entries.front().ck, entries.front().id.path);
  ensure_directory(spec.out);

  CsvTable table(join(spec.out, "lead_table.csv"),
                 {"label", "controller", "lead", "mean_final_log10_cost", "std_final_log10_cost", "band_half_width",
                  "completed_episodes", "flagged_episodes", "solver_calls_per_episode"});
  CsvTable wall(join(spec.out, "wallclock.csv"), {"label", "controller", "lead", "mean_step_seconds"});
  CsvTable band_rows(join(spec.out, "bands.csv"),
                     {"label", "controller", "lead", "step", "mean_running_avg_cost", "std", "band_half_width",
                      "episodes"});
  CsvTable episode_rows_table(join(spec.out, "episode_summary.csv"),
                              {"label", "controller", "lead", "episode", "steps", "final_log10_cost", "solver_calls",
                               "straddle_fraction", "flag"});
  std::vector<Series> sweep_series;
  json rows = json::array();
  for (const auto& entry : entries) {
    auto cfg = mpc::default_mpc_config(sys);
    try {
      mpc::set_controller(cfg, entry.id.controller);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    const auto norm = resolve_norm("", entry.ck, entry.id.path);
    mpc::MpcController ctrl(entry.ck.params, norm, cfg);
    const std::string model_name = model::to_string(entry.ck.params.hyper.kind);
    const Provenance prov{sys.name, model_name, spec.seed};
    Series sweep{entry.label, {}, {}, {}};
    std::vector<Series> running;
    for (int d : spec.lead) {
      log << entry.label << " d=" << d << '\n';
      const auto set = run_episodes(sys, ctrl, spec.episodes, spec.steps, d, spec.seed, log);
      const auto costs = final_log_costs(set);
      const auto [mean, sd] = mean_std(costs);
      int flagged = 0;
      double secs = 0.0;
      int calls = 0;
      std::size_t counted = 0;
      for (std::size_t e = 0; e < set.logs.size(); ++e) {
        const auto& ep = set.logs[e];
        flagged += set.failures[e].empty() ? 0 : 1;
        episode_rows_table.row(prov, {entry.label, entry.id.controller, std::to_string(d), std::to_string(e),
                                      std::to_string(ep.records.size()), format_number(ep.final_log_cost()),
                                      std::to_string(ep.solver_calls), format_number(ep.straddle_fraction()),
                                      "\"" + set.failures[e] + "\""});
        if (!ep.records.empty()) {
          secs += ep.mean_step_seconds();
          calls += ep.solver_calls;
          ++counted;
        }
      }
      const double mean_secs = counted ? secs / static_cast<double>(counted) : std::nan("");
      table.row(prov, {entry.label, entry.id.controller, std::to_string(d), format_number(mean), format_number(sd),
                       format_number(0.3 * sd), std::to_string(costs.size()), std::to_string(flagged),
                       format_number(counted ? static_cast<double>(calls) / static_cast<double>(counted) : 0.0)});
      wall.row(prov, {entry.label, entry.id.controller, std::to_string(d), format_number(mean_secs)});
      const auto bands = step_bands(running_averages(set));
      for (std::size_t k = 0; k < bands.step.size(); ++k) {
        band_rows.row(prov, {entry.label, entry.id.controller, std::to_string(d), std::to_string(k),
                             format_number(bands.mean[k]), format_number(bands.stddev[k]),
                             format_number(bands.half_width[k]), std::to_string(bands.count[k])});
      }
      running.push_back({"d = " + std::to_string(d), bands.step, bands.mean, bands.half_width});
      sweep.x.push_back(d);
      sweep.y.push_back(mean);
      sweep.band.push_back(0.3 * sd);
      rows.push_back({{"label", entry.label}, {"lead", d}, {"mean_final_log10_cost", mean},
                      {"std_final_log10_cost", sd}, {"completed_episodes", costs.size()}, {"flagged", flagged},
                      {"mean_step_seconds", mean_secs}});
    }
    std::string stem = entry.label;
    for (auto& ch : stem) {
      if (ch == '/') ch = '_';
    }
    figure(join(spec.out, "running_cost_" + stem + ".svg"), running,
           {sys.name + ", " + entry.label, "step", "running-average cost", false, true}, log);
    sweep_series.push_back(std::move(sweep));
  }
  figure(join(spec.out, "lead_sweep.svg"), sweep_series,
         {sys.name + " lead-time sweep", "lead d", "log10 cumulative cost", false, false}, log);

  json s = summary_header("lead-sweep");
  s["preset"] = sys.name;
  s["seed"] = spec.seed;
  s["episodes"] = spec.episodes;
  s["steps"] = spec.steps;
  s["rows"] = rows;
  finish(spec.out, s, log);
  return s;
}

// ---- diagnose ---------------------------------------------------------------

json cmd_diagnose(const DiagnoseSpec& spec, std::ostream& log) {
  if (spec.ckpt.empty()) throw UsageError("at least one --ckpt is required");
  std::vector<LoadedCheckpoint> cks;
  for (const auto& path : spec.ckpt) cks.push_back(load_checkpoint(path));
  const auto ds = limit_windows(load_dataset(spec.data), 0, 0, spec.limit_test);
  ensure_directory(spec.out);

  CsvTable table(join(spec.out, "diagnostics.csv"),
                 {"checkpoint", "g_norm", "transitions", "mean_spectral_radius", "max_spectral_radius",
                  "penalty_active_fraction", "gershgorin_straddle_fraction"});
  CsvTable hist(join(spec.out, "spectral_radius_hist.csv"), {"checkpoint", "bin_lo", "bin_hi", "count"});
  std::vector<Series> hists;
  json rows = json::array();
  const auto test = ds.indices(data::Split::Test);
  for (std::size_t c = 0; c < cks.size(); ++c) {
    const auto& p = cks[c].params;
    const auto g = model::coupling_generators(p);
    const Provenance prov{ds.preset, model::to_string(p.hyper.kind), cks[c].meta.value("train_seed", std::uint64_t{0})};
    std::size_t transitions = 0, active = 0, straddle = 0;
    double sum_rho = 0.0, max_rho = 0.0;
    constexpr int kBins = 24;
    constexpr double kLo = 0.0, kHi = 1.2;
    std::vector<std::size_t> bins(kBins, 0);
    for (auto i : test) {
      const auto smp = train::make_sample(ds, i);
      const auto b = model::generate_operators(p, smp.x.topRows(p.hyper.lookback), smp.u.topRows(p.hyper.lookback));
      for (int k = 0; k + 1 < p.hyper.horizon; ++k) {
        const Vector u = b.to_model(smp.u.row(p.hyper.lookback + k).transpose());
        const auto ops = model::discretize_lie_trotter(b, g, u, p.hyper.coupling_period);
        const auto diag = mpc::stability_diagnostics(ops.a);
        ++transitions;
        sum_rho += diag.spectral_radius;
        max_rho = std::max(max_rho, diag.spectral_radius);
        straddle += diag.gershgorin_straddles ? 1 : 0;
        active += bmk::spectral_penalty(ops.a, p.hyper.margin).active > 0 ? 1 : 0;
        const int bin = static_cast<int>((diag.spectral_radius - kLo) / (kHi - kLo) * kBins);
        ++bins[static_cast<std::size_t>(std::clamp(bin, 0, kBins - 1))];
      }
    }
    const double n = std::max<double>(1.0, static_cast<double>(transitions));
    const double gn = model::g_norm(p);
    table.row(prov, {spec.ckpt[c], format_number(gn), std::to_string(transitions), format_number(sum_rho / n),
                     format_number(max_rho), format_number(static_cast<double>(active) / n),
                     format_number(static_cast<double>(straddle) / n)});
    Series h{spec.ckpt[c], {}, {}, {}};
    for (int b = 0; b < kBins; ++b) {
      const double lo = kLo + (kHi - kLo) * b / kBins, hi = kLo + (kHi - kLo) * (b + 1) / kBins;
      hist.row(prov, {spec.ckpt[c], format_number(lo), format_number(hi), std::to_string(bins[static_cast<std::size_t>(b)])});
      h.x.push_back(0.5 * (lo + hi));
      h.y.push_back(static_cast<double>(bins[static_cast<std::size_t>(b)]) / n);
    }
    hists.push_back(std::move(h));
    rows.push_back({{"checkpoint", spec.ckpt[c]}, {"model", model::to_string(p.hyper.kind)}, {"g_norm", gn},
                    {"mean_spectral_radius", sum_rho / n}, {"max_spectral_radius", max_rho},
                    {"penalty_active_fraction", static_cast<double>(active) / n},
                    {"gershgorin_straddle_fraction", static_cast<double>(straddle) / n}});
    log << spec.ckpt[c] << ": |G|_F " << format_number(gn) << ", straddle fraction "
        << format_number(static_cast<double>(straddle) / n) << '\n';
  }
  figure(join(spec.out, "spectral_radius.svg"), hists,
         {"spectral radius of the step operator, " + ds.preset, "spectral radius", "fraction of transitions", false,
          false},
         log);
  json s = summary_header("diagnose");
  s["cell"] = ds.preset;
  s["test_windows"] = test.size();
  s["rows"] = rows;
  finish(spec.out, s, log);
  return s;
}

}  // namespace bmk::harness
