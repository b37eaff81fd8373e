#include "bmk/train/training.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "json.hpp"

namespace bmk::train {

double lr_at(const TrainConfig& cfg, int epoch) {
  return cfg.lr * std::pow(cfg.lr_gamma, epoch / cfg.lr_step);
}

AdamW::AdamW(const model::ParamVector& like, double beta1, double beta2, double eps, double weight_decay)
    : beta1_(beta1), beta2_(beta2), eps_(eps), wd_(weight_decay) {
  for (const auto& p : like) {
    m_.push_back(Matrix::Zero(p.rows(), p.cols()));
    v_.push_back(Matrix::Zero(p.rows(), p.cols()));
  }
}

void AdamW::step(model::ParamVector& params, const model::ParamVector& grads, double lr) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw DimensionError("AdamW: parameter count mismatch");
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i] *= 1.0 - lr * wd_;
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grads[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grads[i].cwiseAbs2();
    params[i].array() -= lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
  }
}

double global_norm(const model::ParamVector& g) {
  double s = 0.0;
  for (const auto& m : g) s += m.squaredNorm();
  return std::sqrt(s);
}

double clip_global_norm(model::ParamVector& g, double max_norm) {
  const double n = global_norm(g);
  if (n > max_norm) {
    const double f = max_norm / n;
    for (auto& m : g) m *= f;
  }
  return n;
}

model::Sample make_sample(const data::Dataset& ds, std::size_t i) {
  return {ds.norm.normalize_states(ds.window_states(i)), ds.norm.normalize_controls(ds.window_controls(i))};
}

double mean_loss(const model::ModelParams& p, const data::Dataset& ds, data::Split split, bool with_penalty) {
  const auto idx = ds.indices(split);
  if (idx.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (auto i : idx) {
    const auto smp = make_sample(ds, i);
    s += model::evaluate_window(p, smp.x, smp.u, with_penalty).loss;
  }
  return s / static_cast<double>(idx.size());
}

double evaluate_forecast(const data::Dataset& ds, data::Split split, const Predictor& predict) {
  const auto idx = ds.indices(split);
  if (idx.empty()) throw std::invalid_argument("evaluate_forecast: empty split " + data::to_string(split));
  double s = 0.0;
  std::size_t count = 0;
  for (auto i : idx) {
    const auto smp = make_sample(ds, i);
    const Matrix pred = predict(smp.x, smp.u);
    const Matrix truth = smp.x.middleRows(data::kLookback, pred.rows());
    s += (pred - truth).squaredNorm();
    count += static_cast<std::size_t>(pred.size());
  }
  return s / static_cast<double>(count);
}

double evaluate_forecast(const model::ModelParams& p, const data::Dataset& ds, data::Split split) {
  return evaluate_forecast(ds, split, [&](const Matrix& x, const Matrix& u) {
    return model::evaluate_window(p, x, u, false).predicted;
  });
}

namespace {

std::string snapshot(const model::ModelParams& p, int epoch, std::size_t batch) {
  std::ostringstream os;
  os << "training diverged at epoch " << epoch << ", batch " << batch << "; parameter norms:";
  p.visit([&](const std::string& name, const Matrix& m) { os << ' ' << name << '=' << m.norm(); });
  return os.str();
}

}  // namespace

TrainResult train(const data::Dataset& ds, model::ModelParams params, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  const auto train_idx = ds.indices(data::Split::Train);
  if (train_idx.empty() || ds.count(data::Split::Val) == 0) {
    throw std::invalid_argument("train: dataset needs train and val windows");
  }
  const bool have_test = ds.count(data::Split::Test) > 0 && cfg.log_test;

  TrainResult res;
  res.log.initial_train_loss = mean_loss(params, ds, data::Split::Train, true);
  AdamW opt(model::flatten(params), cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay);
  double best_val = std::numeric_limits<double>::infinity();
  const auto start = std::chrono::steady_clock::now();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr_at(cfg, epoch);

    std::vector<std::size_t> order = train_idx;
    data::CounterRng rng(cfg.seed, 0x747261696eULL + static_cast<std::uint64_t>(epoch));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    double loss_sum = 0.0;
    for (std::size_t b0 = 0, batch = 0; b0 < order.size(); b0 += static_cast<std::size_t>(cfg.batch_size), ++batch) {
      const std::size_t b1 = std::min(order.size(), b0 + static_cast<std::size_t>(cfg.batch_size));
      std::vector<model::Sample> samples;
      samples.reserve(b1 - b0);
      for (std::size_t k = b0; k < b1; ++k) samples.push_back(make_sample(ds, order[k]));
      std::vector<const model::Sample*> ptrs;
      for (const auto& s : samples) ptrs.push_back(&s);

      model::LossGrad lg;
      try {
        lg = model::batch_loss_grad(params, ptrs, true);
      } catch (const std::exception& e) {
        throw TrainingError(snapshot(params, epoch, batch) + " (" + e.what() + ")");
      }
      if (!std::isfinite(lg.loss) || !std::isfinite(global_norm(lg.grad))) {
        throw TrainingError(snapshot(params, epoch, batch));
      }
      rec.max_grad_norm = std::max(rec.max_grad_norm, clip_global_norm(lg.grad, cfg.clip_norm));
      auto flat = model::flatten(params);
      opt.step(flat, lg.grad, rec.lr);
      model::assign(params, flat);
      loss_sum += lg.loss * static_cast<double>(b1 - b0);
    }
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    rec.val_loss = mean_loss(params, ds, data::Split::Val, false);
    if (!std::isfinite(rec.val_loss)) throw TrainingError(snapshot(params, epoch, 0));
    rec.g_norm = model::g_norm(params);

    const bool improved = rec.val_loss < best_val;
    if (improved) {
      best_val = rec.val_loss;
      res.best_params = params;
      res.log.best_epoch = epoch;
    }
    const bool scheduled = epoch % std::max(1, cfg.test_every) == 0 || epoch >= cfg.epochs - 50;
    if (have_test && (scheduled || improved)) rec.test_mse = evaluate_forecast(params, ds);
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    res.log.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  res.final_params = std::move(params);
  if (res.log.best_epoch < 0) res.best_params = res.final_params;
  return res;
}

SelectionMetrics selection_metrics(const std::vector<double>& val_loss, const std::vector<double>& test_mse) {
  if (val_loss.empty() || val_loss.size() != test_mse.size()) {
    throw std::invalid_argument("selection_metrics: need matching, non-empty series");
  }
  SelectionMetrics s;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < val_loss.size(); ++i) {
    if (val_loss[i] < best) {
      best = val_loss[i];
      s.best_epoch = static_cast<int>(i);
    }
  }
  if (s.best_epoch < 0) throw std::invalid_argument("selection_metrics: no finite validation loss");
  s.best = test_mse[static_cast<std::size_t>(s.best_epoch)];
  if (std::isnan(s.best)) throw std::invalid_argument("selection_metrics: best epoch has no test MSE");
  const std::size_t from = val_loss.size() > 50 ? val_loss.size() - 50 : 0;
  double sum = 0.0;
  int n = 0;
  for (std::size_t i = from; i < test_mse.size(); ++i) {
    if (!std::isnan(test_mse[i])) {
      sum += test_mse[i];
      ++n;
    }
  }
  s.short_run = n < 50;
  s.mean50 = n > 0 ? sum / n : std::numeric_limits<double>::quiet_NaN();
  return s;
}

SelectionMetrics selection_metrics(const TrainLog& log) {
  std::vector<double> v, t;
  for (const auto& r : log.epochs) {
    v.push_back(r.val_loss);
    t.push_back(r.test_mse);
  }
  return selection_metrics(v, t);
}

void write_train_log(const TrainLog& log, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << "format_version,epoch,lr,train_loss,val_loss,test_mse,g_norm,max_grad_norm,wall_seconds,best\n";
  out << std::setprecision(10);
  for (const auto& r : log.epochs) {
    out << 1 << ',' << r.epoch << ',' << r.lr << ',' << r.train_loss << ',' << r.val_loss << ',';
    if (!std::isnan(r.test_mse)) out << r.test_mse;
    out << ',' << r.g_norm << ',' << r.max_grad_norm << ',' << r.wall_seconds << ','
        << (r.epoch == log.best_epoch ? 1 : 0) << '\n';
  }
}

void write_checkpoint_sidecar(const std::string& path, const model::ModelParams& p, int epoch,
                              double val_loss, std::uint64_t train_seed, std::uint64_t data_seed,
                              const std::string& preset) {
  nlohmann::json j;
  j["format_version"] = 1;
  j["preset"] = preset;
  j["model"] = model::to_string(p.hyper.kind);
  j["epoch"] = epoch;
  j["val_loss"] = val_loss;
  j["train_seed"] = train_seed;
  j["data_seed"] = data_seed;
  j["latent_dim"] = p.hyper.latent_dim;
  j["rank"] = p.hyper.rank;
  j["conv_kernel"] = p.hyper.conv_kernel;
  j["lambda_s"] = p.hyper.lambda_s;
  j["g_norm"] = model::g_norm(p);
  j["parameters"] = p.scalar_count();
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << j.dump(2) << '\n';
}

}  // namespace bmk::train
