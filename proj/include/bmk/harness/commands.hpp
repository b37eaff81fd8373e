#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "bmk/mpc/controller.hpp"
#include "bmk/harness/report.hpp"

namespace bmk::harness {

struct GenDataSpec {
  std::string preset = "cartpole-ti";
  std::uint64_t seed = 1;
  std::string out = "out/gen-data";
  std::size_t train_pool = 39900;
  std::size_t test = 4000;
  bool csv = false;
};

struct TrainSpec {
  std::string data;
  std::string model = "bilinear";
  std::string out = "out/train";
  int epochs = 401;
  double lr = 1e-3;
  double weight_decay = 1e-3;
  int batch_size = 256;
  int lr_step = 50;
  double lr_gamma = 0.9;
  double clip_norm = 1.0;
  std::uint64_t seed = 1;
  int test_every = 10;
  std::size_t limit_train = 0;
  std::size_t limit_val = 0;
  std::size_t limit_test = 0;
  bool quiet = false;
};

struct EvalForecastSpec {
  std::string data;
  std::vector<std::string> ckpt;
  std::string out = "out/eval-forecast";
  std::size_t limit_test = 0;
};

struct RunMpcSpec {
  std::string ckpt;
  std::string preset;  // defaults to the checkpoint's preset
  std::string norm;    // defaults to the checkpoint sidecar
  std::string controller = "scp1";
  int episodes = 10;
  int lead = 0;
  int steps = 1000;
  std::uint64_t seed = 1;
  std::string out = "out/run-mpc";
};

struct LeadSweepSpec {
  std::vector<std::string> ckpt;  // path or path@controller
  std::string preset;
  std::vector<int> lead = {0, 1, 3, 5};
  std::string controller = "scp5";  // used for bilinear checkpoints without an explicit controller
  int episodes = 10;
  int steps = 1000;
  std::uint64_t seed = 1;
  std::string out = "out/lead-sweep";
};

struct DiagnoseSpec {
  std::vector<std::string> ckpt;
  std::string data;
  std::string out = "out/diagnose";
  std::size_t limit_test = 500;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(GenDataSpec, preset, seed, out, train_pool, test, csv)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TrainSpec, data, model, out, epochs, lr, weight_decay, batch_size,
                                                lr_step, lr_gamma, clip_norm, seed, test_every, limit_train,
                                                limit_val, limit_test, quiet)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(EvalForecastSpec, data, ckpt, out, limit_test)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(RunMpcSpec, ckpt, preset, norm, controller, episodes, lead, steps,
                                                seed, out)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(LeadSweepSpec, ckpt, preset, lead, controller, episodes, steps, seed,
                                                out)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(DiagnoseSpec, ckpt, data, out, limit_test)

/// Each command writes its artifacts under spec.out and returns the JSON
/// summary it also stores as summary.json. Progress goes to `log`.
nlohmann::json cmd_gen_data(const GenDataSpec& spec, std::ostream& log);
nlohmann::json cmd_train(const TrainSpec& spec, std::ostream& log);
nlohmann::json cmd_eval_forecast(const EvalForecastSpec& spec, std::ostream& log);
nlohmann::json cmd_run_mpc(const RunMpcSpec& spec, std::ostream& log);
nlohmann::json cmd_lead_sweep(const LeadSweepSpec& spec, std::ostream& log);
nlohmann::json cmd_diagnose(const DiagnoseSpec& spec, std::ostream& log);

/// Checkpoint metadata written next to `<stem>.bkcp` as `<stem>.json`.
std::string sidecar_path(const std::string& ckpt);

struct LoadedCheckpoint {
  model::ModelParams params;
  nlohmann::json meta;  // empty object when there is no sidecar
};
LoadedCheckpoint load_checkpoint(const std::string& path);

/// Episode table columns and rows (without the provenance prefix).
std::vector<std::string> episode_columns(int n, int m);
std::vector<std::vector<std::string>> episode_rows(const mpc::EpisodeLog& log, int episode);

}  // namespace bmk::harness
