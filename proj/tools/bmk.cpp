#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "bmk/harness/commands.hpp"
#include "bmk/version.hpp"

namespace {

using bmk::harness::UsageError;
using nlohmann::json;

/// A subcommand whose flags mirror the keys of its JSON spec.
template <class Spec>
class Command {
 public:
  using Runner = std::function<json(const Spec&, std::ostream&)>;

  Command(CLI::App& parent, const std::string& name, const std::string& about, Runner run)
      : app_(parent.add_subcommand(name, about)), run_(std::move(run)) {
    app_->add_option("--config", config_, "JSON file with default values for this command");
  }

  template <class T>
  CLI::Option* option(const std::string& key, T Spec::*field, const std::string& about) {
    std::string flag = "--" + key;
    for (auto& c : flag) {
      if (c == '_') c = '-';
    }
    return app_->add_option(flag, flags_.*field, about)->default_str(json(Spec{}.*field).dump());
  }

  CLI::Option* flag(const std::string& key, bool Spec::*field, const std::string& about) {
    std::string flag = "--" + key;
    for (auto& c : flag) {
      if (c == '_') c = '-';
    }
    return app_->add_flag(flag, flags_.*field, about);
  }

  bool parsed() const { return app_->parsed(); }

  int run() {
    std::vector<std::string> explicit_keys;
    for (const CLI::Option* opt : app_->get_options()) {
      if (opt->count() == 0 || opt->get_lnames().empty()) continue;
      std::string key = opt->get_lnames().front();
      if (key == "config" || key == "help") continue;
      for (auto& c : key) {
        if (c == '-') c = '_';
      }
      explicit_keys.push_back(key);
    }
    Spec spec;
    json effective;
    try {
      const json file = config_.empty() ? json() : bmk::harness::read_json(config_);
      effective = bmk::harness::merge_config(json(Spec{}), file, json(flags_), explicit_keys);
      spec = effective.get<Spec>();
    } catch (const json::exception& e) {
      throw UsageError(std::string("invalid configuration: ") + e.what());
    }
    bmk::harness::ensure_directory(spec.out);
    json echo = effective;
    echo["command"] = app_->get_name();
    echo["code_version"] = bmk::code_version();
    bmk::harness::write_json(spec.out + "/effective_config.json", echo);
    run_(spec, std::cerr);
    return 0;
  }

 private:
  CLI::App* app_;
  Runner run_;
  Spec flags_;
  std::string config_;
};

int run_cli(int argc, char** argv) {
  using namespace bmk::harness;
  CLI::App app{"Bilinear latent dynamics toolkit: data generation, training, forecasting and SCP-MPC"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(bmk::code_version()));

  Command<GenDataSpec> gen(app, "gen-data", "Simulate a benchmark and write the windowed dataset", cmd_gen_data);
  gen.option("preset", &GenDataSpec::preset, "cartpole-ti | cartpole-tv | rscp-ti | rscp-tv");
  gen.option("seed", &GenDataSpec::seed, "generation seed");
  gen.option("out", &GenDataSpec::out, "output directory");
  gen.option("train_pool", &GenDataSpec::train_pool, "train + validation windows");
  gen.option("test", &GenDataSpec::test, "test windows");
  gen.flag("csv", &GenDataSpec::csv, "also export every window row as CSV");

  Command<TrainSpec> tr(app, "train", "Train a linear or bilinear model", cmd_train);
  tr.option("data", &TrainSpec::data, "dataset file from gen-data");
  tr.option("model", &TrainSpec::model, "linear | bilinear");
  tr.option("out", &TrainSpec::out, "output directory");
  tr.option("epochs", &TrainSpec::epochs, "training epochs");
  tr.option("lr", &TrainSpec::lr, "initial learning rate");
  tr.option("weight_decay", &TrainSpec::weight_decay, "decoupled weight decay");
  tr.option("batch_size", &TrainSpec::batch_size, "windows per batch");
  tr.option("lr_step", &TrainSpec::lr_step, "epochs between learning-rate decays");
  tr.option("lr_gamma", &TrainSpec::lr_gamma, "learning-rate decay factor");
  tr.option("clip_norm", &TrainSpec::clip_norm, "global gradient-norm clip");
  tr.option("seed", &TrainSpec::seed, "initialization and shuffling seed");
  tr.option("test_every", &TrainSpec::test_every, "test-MSE logging cadence in epochs");
  tr.option("limit_train", &TrainSpec::limit_train, "use at most this many training windows (0 = all)");
  tr.option("limit_val", &TrainSpec::limit_val, "use at most this many validation windows (0 = all)");
  tr.option("limit_test", &TrainSpec::limit_test, "use at most this many test windows (0 = all)");
  tr.flag("quiet", &TrainSpec::quiet, "suppress per-epoch progress");

  Command<EvalForecastSpec> ev(app, "eval-forecast", "Open-loop forecast MSE of checkpoints", cmd_eval_forecast);
  ev.option("data", &EvalForecastSpec::data, "dataset file");
  ev.option("ckpt", &EvalForecastSpec::ckpt, "checkpoint (repeatable)");
  ev.option("out", &EvalForecastSpec::out, "output directory");
  ev.option("limit_test", &EvalForecastSpec::limit_test, "use at most this many test windows (0 = all)");

  Command<RunMpcSpec> mpc(app, "run-mpc", "Closed-loop MPC episodes", cmd_run_mpc);
  mpc.option("ckpt", &RunMpcSpec::ckpt, "checkpoint");
  mpc.option("preset", &RunMpcSpec::preset, "system preset (default: from the checkpoint)");
  mpc.option("norm", &RunMpcSpec::norm, "JSON with normalization statistics (default: checkpoint sidecar)");
  mpc.option("controller", &RunMpcSpec::controller, "linear | scp1 | scp5 | scp<N>");
  mpc.option("episodes", &RunMpcSpec::episodes, "episodes");
  mpc.option("lead", &RunMpcSpec::lead, "commit window d");
  mpc.option("steps", &RunMpcSpec::steps, "steps per episode");
  mpc.option("seed", &RunMpcSpec::seed, "initial-state seed");
  mpc.option("out", &RunMpcSpec::out, "output directory");

  Command<LeadSweepSpec> sweep(app, "lead-sweep", "Stale-plan lead-time sweep", cmd_lead_sweep);
  sweep.option("ckpt", &LeadSweepSpec::ckpt, "checkpoint or checkpoint@controller (repeatable)");
  sweep.option("preset", &LeadSweepSpec::preset, "system preset (default: from the first checkpoint)");
  sweep.option("lead", &LeadSweepSpec::lead, "comma-separated commit windows")->delimiter(',');
  sweep.option("controller", &LeadSweepSpec::controller, "controller for bilinear checkpoints");
  sweep.option("episodes", &LeadSweepSpec::episodes, "episodes per lead");
  sweep.option("steps", &LeadSweepSpec::steps, "steps per episode");
  sweep.option("seed", &LeadSweepSpec::seed, "initial-state seed");
  sweep.option("out", &LeadSweepSpec::out, "output directory");

  Command<DiagnoseSpec> diag(app, "diagnose", "Coupling norm and spectral diagnostics", cmd_diagnose);
  diag.option("ckpt", &DiagnoseSpec::ckpt, "checkpoint (repeatable)");
  diag.option("data", &DiagnoseSpec::data, "dataset file");
  diag.option("out", &DiagnoseSpec::out, "output directory");
  diag.option("limit_test", &DiagnoseSpec::limit_test, "test windows to scan (0 = all)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  if (gen.parsed()) return gen.run();
  if (tr.parsed()) return tr.run();
  if (ev.parsed()) return ev.run();
  if (mpc.parsed()) return mpc.run();
  if (sweep.parsed()) return sweep.run();
  return diag.run();
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
