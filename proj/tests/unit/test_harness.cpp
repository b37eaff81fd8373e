#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "bmk/harness/commands.hpp"
#include "bmk/harness/report.hpp"
#include "bmk/harness/svg.hpp"
#include "bmk/train/training.hpp"

using namespace bmk;
using namespace bmk::harness;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::vector<std::string> lines(const std::string& path) {
  std::ifstream in(path);
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("bmk_harness_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

/// Tiny dataset plus a linear and a bilinear checkpoint with zero coupling.
struct Fixture {
  fs::path dir;
  std::string data, linear, bilinear;

  explicit Fixture(const std::string& name) : dir(scratch(name)) {
    std::ostringstream quiet;
    GenDataSpec g;
    g.preset = "cartpole-tv";
    g.train_pool = 200;
    g.test = 60;
    g.out = (dir / "data").string();
    cmd_gen_data(g, quiet);
    data = (dir / "data" / "dataset.bkds").string();
    TrainSpec t;
    t.data = data;
    t.epochs = 2;
    t.batch_size = 64;
    t.quiet = true;
    t.model = "linear";
    t.out = (dir / "linear").string();
    cmd_train(t, quiet);
    linear = (dir / "linear" / "best.bkcp").string();
    // Bilinear view of the same weights with L = R = 0.
    auto p = model::read_checkpoint(linear);
    auto h = p.hyper;
    h.kind = model::ModelKind::Bilinear;
    auto b = model::init_params(h, 1);
    b.hyper = h;
    auto flat_lin = model::flatten(p);
    auto flat_bil = model::flatten(b);
    for (std::size_t i = 0; i < flat_lin.size(); ++i) flat_bil[i] = flat_lin[i];
    model::assign(b, flat_bil);
    for (auto& l : b.coupling_l) l.setZero();
    for (auto& r : b.coupling_r) r.setZero();
    bilinear = (dir / "bilinear.bkcp").string();
    model::write_checkpoint(b, bilinear);
    fs::copy_file(sidecar_path(linear), sidecar_path(bilinear));
  }
};

}  // namespace

TEST_CASE("svg: constant series, determinism, bands and empty input") {
  const auto dir = scratch("svg");
  const std::vector<Series> flat = {{"flat", {0, 1, 2, 3}, {2, 2, 2, 2}, {}}};
  FigureStyle style{"constant", "x", "y", false, false};
  const auto svg = render_svg(flat, style);
  CHECK(svg.find("<path class=\"series\" d=\"M") != std::string::npos);
  // All points share one pixel row: a horizontal path.
  const auto d0 = svg.find("d=\"M") + 5;
  const auto d1 = svg.find('"', d0);
  std::istringstream path(svg.substr(d0, d1 - d0));
  std::set<std::string> ys;
  for (std::string tok; path >> tok;) ys.insert(tok.substr(tok.find(',') + 1));
  CHECK(ys.size() == 1);

  const auto a = (dir / "a.svg").string(), b = (dir / "b.svg").string();
  REQUIRE(emit_svg(a, flat, style));
  REQUIRE(emit_svg(b, flat, style));
  CHECK(slurp(a) == slurp(b));

  const std::vector<Series> banded = {{"mean", {1, 2, 3}, {1, 2, 3}, {0.3, 0.3, 0.3}}};
  CHECK(render_svg(banded, style).find("<polygon class=\"band\"") != std::string::npos);

  const auto c = (dir / "c.svg").string();
  CHECK_FALSE(emit_svg(c, {}, style));
  CHECK_FALSE(fs::exists(c));
  FigureStyle logy = style;
  logy.log_y = true;
  CHECK_FALSE(emit_svg(c, {{"neg", {1, 2}, {-1, -2}, {}}}, logy));
  CHECK_FALSE(fs::exists(c));
  CHECK_THROWS_AS(render_svg({{"bad", {1, 2}, {1}, {}}}, style), std::invalid_argument);
}

TEST_CASE("config merge: file over defaults, explicit flags over file") {
  TrainSpec defaults;
  nlohmann::json file = {{"epochs", 7}, {"lr", 0.01}};
  TrainSpec flags;
  flags.epochs = 3;
  flags.lr = 0.5;  // not explicitly given: must not override the file
  const auto merged = merge_config(nlohmann::json(defaults), file, nlohmann::json(flags), {"epochs"});
  const auto spec = merged.get<TrainSpec>();
  CHECK(spec.epochs == 3);
  CHECK(spec.lr == 0.01);
  CHECK(spec.batch_size == 256);
  CHECK_THROWS_AS(merge_config(nlohmann::json(defaults), {{"epoch", 1}}, nlohmann::json(flags), {}), UsageError);
  CHECK_THROWS_AS(merge_config(nlohmann::json(defaults), nlohmann::json::array(), nlohmann::json(flags), {}),
                  UsageError);
}

TEST_CASE("step bands: half-width is 0.3 standard deviations and short runs drop out") {
  const auto b = step_bands({{1.0, 2.0, 3.0}, {3.0, 4.0}});
  REQUIRE(b.step.size() == 3);
  CHECK(b.mean[0] == 2.0);
  CHECK(b.stddev[0] == 1.0);
  CHECK(b.half_width[0] == doctest::Approx(0.3));
  CHECK(b.count[2] == 1);
  CHECK(b.stddev[2] == 0.0);
}

TEST_CASE("csv tables carry version and provenance columns") {
  const auto dir = scratch("csv");
  const auto path = (dir / "t.csv").string();
  {
    CsvTable t(path, {"a", "b"});
    t.row({"cartpole-ti", "bilinear", 4}, {"1", format_number(0.1)});
    CHECK_THROWS_AS(t.row({"x", "y", 1}, {"1"}), std::logic_error);
  }
  const auto l = lines(path);
  REQUIRE(l.size() == 2);
  CHECK(l[0] == "format_version,code_version,preset,model,seed,a,b");
  CHECK(l[1].rfind("1,", 0) == 0);
  CHECK(l[1].find(",cartpole-ti,bilinear,4,1,0.1") != std::string::npos);
  CHECK(format_number(std::nan("")) == "nan");
}

TEST_CASE("limit_windows keeps evenly spaced windows per split") {
  data::GenerationTargets t;
  t.train_pool = 100;
  t.test = 40;
  const auto ds = data::generate_dataset(sim::preset("cartpole-ti"), t, 2);
  const auto small = limit_windows(ds, 10, 5, 0);
  CHECK(small.count(data::Split::Train) == 10);
  CHECK(small.count(data::Split::Val) == 5);
  CHECK(small.count(data::Split::Test) == 40);
  CHECK(small.norm == ds.norm);
}

TEST_CASE("eval-forecast: zero coupling rows match, row count and determinism") {
  Fixture fx("forecast");
  std::ostringstream quiet;
  EvalForecastSpec spec;
  spec.data = fx.data;
  spec.ckpt = {fx.linear, fx.bilinear};
  spec.out = (fx.dir / "eval1").string();
  const auto s = cmd_eval_forecast(spec, quiet);
  REQUIRE(s["rows"].size() == 2);
  CHECK(std::abs(s["rows"][0]["best"].get<double>() - s["rows"][1]["best"].get<double>()) <= 1e-12);
  const auto table = lines(spec.out + "/forecast.csv");
  CHECK(table.size() == 1 + 2 * 1 * 2);
  spec.out = (fx.dir / "eval2").string();
  cmd_eval_forecast(spec, quiet);
  CHECK(slurp((fx.dir / "eval1" / "forecast.csv").string()) == slurp((fx.dir / "eval2" / "forecast.csv").string()));

  spec.ckpt = {(fx.dir / "missing.bkcp").string()};
  try {
    cmd_eval_forecast(spec, quiet);
    FAIL("expected a usage error");
  } catch (const UsageError& e) {
    CHECK(std::string(e.what()).find("missing.bkcp") != std::string::npos);
  }
}

TEST_CASE("lead-sweep: d = 0 reproduces run-mpc and emits wall-clock rows") {
  Fixture fx("sweep");
  std::ostringstream quiet;
  RunMpcSpec run;
  run.ckpt = fx.bilinear;
  run.controller = "scp1";
  run.episodes = 2;
  run.steps = 25;
  run.out = (fx.dir / "run").string();
  const auto r = cmd_run_mpc(run, quiet);

  LeadSweepSpec sweep;
  sweep.ckpt = {fx.bilinear + "@scp1"};
  sweep.lead = {0, 3};
  sweep.episodes = 2;
  sweep.steps = 25;
  sweep.out = (fx.dir / "sweep").string();
  const auto s = cmd_lead_sweep(sweep, quiet);
  REQUIRE(s["rows"].size() == 2);
  CHECK(s["rows"][0]["mean_final_log10_cost"].get<double>() == r["mean_final_log10_cost"].get<double>());
  CHECK(lines(sweep.out + "/wallclock.csv").size() == 3);
  CHECK(lines(sweep.out + "/bands.csv").size() == 1 + 2 * 25);
  CHECK(fs::exists(sweep.out + "/lead_sweep.svg"));
  for (const auto& row : lines(sweep.out + "/episode_summary.csv")) {
    if (row.rfind("format_version", 0) == 0) continue;
    const bool lead_column = row.find(",3,") != std::string::npos || row.find(",0,") != std::string::npos;
    CHECK(lead_column);
  }
}

TEST_CASE("diagnose reports the coupling norm") {
  Fixture fx("diag");
  std::ostringstream quiet;
  DiagnoseSpec spec;
  spec.data = fx.data;
  spec.ckpt = {fx.bilinear};
  spec.out = (fx.dir / "diag").string();
  spec.limit_test = 10;
  const auto s = cmd_diagnose(spec, quiet);
  CHECK(s["rows"][0]["g_norm"].get<double>() == 0.0);
  CHECK(s["rows"][0]["mean_spectral_radius"].get<double>() < 1.0);
}
