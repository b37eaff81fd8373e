#include <cmath>
#include <algorithm>
#include <limits>

#include "doctest.h"

#include "bmk/train/training.hpp"

using namespace bmk;
using namespace bmk::train;

namespace {

const data::Dataset& toy_dataset() {
  static const data::Dataset ds = [] {
    data::GenerationTargets t;
    t.train_pool = 10;
    t.test = 6;
    return data::generate_dataset(sim::preset("cartpole-ti"), t, 3);
  }();
  return ds;
}

model::ModelParams toy_model() {
  auto h = model::default_hyper("cartpole-ti", model::ModelKind::Bilinear);
  h.hidden = 16;
  return model::init_params(h, 5);
}

}  // namespace

TEST_CASE("learning-rate schedule") {
  TrainConfig cfg;
  CHECK(lr_at(cfg, 0) == 1e-3);
  CHECK(lr_at(cfg, 49) == 1e-3);
  CHECK(lr_at(cfg, 50) == doctest::Approx(9e-4).epsilon(1e-14));
  CHECK(lr_at(cfg, 100) == doctest::Approx(8.1e-4).epsilon(1e-14));
  CHECK(cfg.epochs == 401);
  CHECK(cfg.batch_size == 256);
  CHECK(cfg.weight_decay == 1e-3);
  CHECK(cfg.clip_norm == 1.0);
}

TEST_CASE("decoupled weight decay with zero gradient") {
  model::ParamVector p = {Matrix::Constant(2, 3, 1.5), Matrix::Constant(1, 1, -2.0)};
  AdamW opt(p, 0.9, 0.999, 1e-8, 1e-3);
  const model::ParamVector g = {Matrix::Zero(2, 3), Matrix::Zero(1, 1)};
  opt.step(p, g, 0.1);
  CHECK(p[0](1, 2) == 1.5 * (1.0 - 0.1 * 1e-3));
  CHECK(p[1](0, 0) == -2.0 * (1.0 - 0.1 * 1e-3));
}

TEST_CASE("Adam first step moves each weight by about lr") {
  model::ParamVector p = {Matrix::Constant(1, 2, 0.0)};
  AdamW opt(p, 0.9, 0.999, 1e-8, 0.0);
  opt.step(p, {(Matrix(1, 2) << 3.0, -0.01).finished()}, 0.01);
  CHECK(p[0](0, 0) == doctest::Approx(-0.01).epsilon(1e-6));
  CHECK(p[0](0, 1) == doctest::Approx(0.01).epsilon(1e-4));
}

TEST_CASE("global-norm clipping") {
  model::ParamVector g = {Matrix::Constant(3, 3, 2.0), Matrix::Constant(2, 1, -5.0)};
  const double before = clip_global_norm(g, 1.0);
  CHECK(before == doctest::Approx(std::sqrt(36.0 + 50.0)));
  CHECK(global_norm(g) <= 1.0 + 1e-12);
  model::ParamVector small = {Matrix::Constant(1, 1, 0.5)};
  clip_global_norm(small, 1.0);
  CHECK(small[0](0, 0) == 0.5);
}

TEST_CASE("one epoch on a toy set") {
  const auto& ds = toy_dataset();
  CHECK(ds.count(data::Split::Train) == 8);
  const auto p0 = toy_model();
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 4;
  const auto r = train::train(ds, p0, cfg);
  CHECK(r.log.epochs.size() == 1);
  CHECK(r.log.best_epoch == 0);
  CHECK((r.final_params.enc_w1 - p0.enc_w1).norm() > 0.0);
  CHECK(std::isfinite(r.log.epochs[0].test_mse));
  CHECK(r.log.epochs[0].max_grad_norm > 0.0);
}

TEST_CASE("training is deterministic and keeps the best checkpoint") {
  const auto& ds = toy_dataset();
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.batch_size = 3;
  cfg.lr = 1e-2;
  const auto a = train::train(ds, toy_model(), cfg);
  const auto b = train::train(ds, toy_model(), cfg);
  REQUIRE(a.log.epochs.size() == 4);
  for (int e = 0; e < 4; ++e) {
    CHECK(a.log.epochs[e].train_loss == b.log.epochs[e].train_loss);
    CHECK(a.log.epochs[e].val_loss == b.log.epochs[e].val_loss);
  }
  CHECK(model::flatten(a.final_params) == model::flatten(b.final_params));
  const int best = a.log.best_epoch;
  for (const auto& r : a.log.epochs) CHECK(r.val_loss >= a.log.epochs[best].val_loss);
  CHECK(mean_loss(a.best_params, ds, data::Split::Val, false) ==
        doctest::Approx(a.log.epochs[best].val_loss).epsilon(1e-12));
}

TEST_CASE("non-finite loss aborts with a snapshot") {
  auto p = toy_model();
  p.dec.b2(0, 0) = std::numeric_limits<double>::quiet_NaN();
  TrainConfig cfg;
  cfg.epochs = 1;
  try {
    train::train(toy_dataset(), p, cfg);
    FAIL("expected TrainingError");
  } catch (const TrainingError& e) {
    CHECK(std::string(e.what()).find("epoch 0") != std::string::npos);
  }
}

TEST_CASE("forecast evaluation oracles") {
  const auto& ds = toy_dataset();
  const auto exact = [](const Matrix& x, const Matrix&) { return Matrix(x.middleRows(30, 30)); };
  CHECK(evaluate_forecast(ds, data::Split::Test, exact) == 0.0);

  // predicting the training mean (zero in normalized units) gives the mean
  // squared deviation of the test states from it
  const auto mean = [](const Matrix& x, const Matrix&) { return Matrix(Matrix::Zero(30, x.cols())); };
  double direct = 0.0;
  std::size_t count = 0;
  for (auto i : ds.indices(data::Split::Test)) {
    const Matrix xs = ds.window_states(i).bottomRows(30);
    for (Eigen::Index r = 0; r < xs.rows(); ++r) {
      for (Eigen::Index c = 0; c < xs.cols(); ++c) {
        const double d = (xs(r, c) - ds.norm.state_mean(c)) / ds.norm.state_std(c);
        direct += d * d;
        ++count;
      }
    }
  }
  CHECK(evaluate_forecast(ds, data::Split::Test, mean) == doctest::Approx(direct / count).epsilon(1e-12));

  auto shuffled = ds;
  std::reverse(shuffled.windows.begin(), shuffled.windows.end());
  const auto p = toy_model();
  CHECK(evaluate_forecast(p, shuffled) == doctest::Approx(evaluate_forecast(p, ds)).epsilon(1e-12));
}

TEST_CASE("selection metrics") {
  const std::vector<double> c(60, 0.25);
  const auto s = selection_metrics(std::vector<double>(60, 1.0), c);
  CHECK(s.best == 0.25);
  CHECK(s.mean50 == 0.25);
  CHECK_FALSE(s.short_run);

  std::vector<double> val = {9, 8, 7, 6, 5, 4, 3, 2, 2.5, 2.6};
  std::vector<double> test = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  const auto t = selection_metrics(val, test);
  CHECK(t.best_epoch == 7);
  CHECK(t.best == 8.0);
  CHECK(t.short_run);
  CHECK(t.mean50 == doctest::Approx(5.5));

  std::vector<double> osc_val, osc_test;
  for (int e = 0; e < 100; ++e) {
    const double spike = e % 2 == 0 ? -0.5 : 0.5;
    osc_val.push_back(1.0 + spike);
    osc_test.push_back(1.0 + spike);
  }
  const auto o = selection_metrics(osc_val, osc_test);
  CHECK(o.mean50 > o.best);
}
