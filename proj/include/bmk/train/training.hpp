#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "bmk/data/dataset.hpp"
#include "bmk/model/model.hpp"

namespace bmk::train {

struct TrainConfig {
  int epochs = 401;
  double lr = 1e-3;
  double weight_decay = 1e-3;
  int batch_size = 256;
  int lr_step = 50;
  double lr_gamma = 0.9;
  double clip_norm = 1.0;
  double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  std::uint64_t seed = 1;
  int test_every = 10;   // test MSE cadence; the final 50 epochs are always logged
  bool log_test = true;
};

/// Step schedule: lr * gamma^floor(epoch / step), epochs counted from 0.
double lr_at(const TrainConfig& cfg, int epoch);

/// Adam with decoupled weight decay.
class AdamW {
 public:
  AdamW(const model::ParamVector& like, double beta1, double beta2, double eps, double weight_decay);
  void step(model::ParamVector& params, const model::ParamVector& grads, double lr);
  long steps() const { return t_; }

 private:
  model::ParamVector m_, v_;
  double beta1_, beta2_, eps_, wd_;
  long t_ = 0;
};

double global_norm(const model::ParamVector& g);
/// Rescales g to norm <= max_norm; returns the norm before clipping.
double clip_global_norm(model::ParamVector& g, double max_norm);

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double test_mse = std::numeric_limits<double>::quiet_NaN();
  double g_norm = 0.0;
  double max_grad_norm = 0.0;  // largest pre-clip gradient norm in the epoch
  double wall_seconds = 0.0;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  double initial_train_loss = 0.0;
  int best_epoch = -1;
};

struct TrainResult {
  model::ModelParams final_params;
  model::ModelParams best_params;
  TrainLog log;
};

class TrainingError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Called after every epoch (for progress output).
using EpochCallback = std::function<void(const EpochRecord&)>;

TrainResult train(const data::Dataset& ds, model::ModelParams params, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

/// Normalized window i of the dataset.
model::Sample make_sample(const data::Dataset& ds, std::size_t i);

/// Maps normalized window (states, controls) to horizon x n normalized predictions.
using Predictor = std::function<Matrix(const Matrix& x, const Matrix& u)>;

/// Mean squared error per element of the horizon predictions over the split,
/// in normalized units.
double evaluate_forecast(const data::Dataset& ds, data::Split split, const Predictor& predict);
double evaluate_forecast(const model::ModelParams& p, const data::Dataset& ds,
                         data::Split split = data::Split::Test);

/// Mean window loss over a split (prediction term only unless with_penalty).
double mean_loss(const model::ModelParams& p, const data::Dataset& ds, data::Split split, bool with_penalty);

struct SelectionMetrics {
  double best = 0.0;    // test MSE at the minimum-validation-loss epoch
  double mean50 = 0.0;  // mean test MSE over the final 50 epochs
  int best_epoch = -1;
  bool short_run = false;  // fewer than 50 epochs with a test MSE
};

/// NaN test entries are skipped for mean50; the best epoch must carry a test MSE.
SelectionMetrics selection_metrics(const std::vector<double>& val_loss, const std::vector<double>& test_mse);
SelectionMetrics selection_metrics(const TrainLog& log);

void write_train_log(const TrainLog& log, const std::string& path);

/// JSON sidecar next to a checkpoint: epoch, validation loss, seeds.
void write_checkpoint_sidecar(const std::string& path, const model::ModelParams& p, int epoch,
                              double val_loss, std::uint64_t train_seed, std::uint64_t data_seed,
                              const std::string& preset);

}  // namespace bmk::train
