#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "stvnn/cli.hpp"
#include "stvnn/config.hpp"
#include "stvnn/datagen.hpp"
#include "stvnn/experiments.hpp"
#include "stvnn/series_io.hpp"

namespace stvnn {
namespace {

namespace fs = std::filesystem;

ForecastConfig tiny_forecast() {
  ForecastConfig c;
  c.model.widths = {4};
  c.model.epochs = 2;
  c.model.memory = 2;
  c.horizons = {1, 2};
  c.trials = 2;
  c.seed = 3;
  return c;
}

TEST(Helpers, MovingAverageArgmaxWindowMean) {
  const std::vector<double> x{0, 0, 3, 0, 0};
  const std::vector<double> m = moving_average(x, 3);
  EXPECT_DOUBLE_EQ(m[1], 1.0);
  EXPECT_DOUBLE_EQ(m[0], 0.0);
  EXPECT_DOUBLE_EQ(m[4], 0.0);
  EXPECT_EQ(local_argmax(x, 0, 10), 2);
  EXPECT_DOUBLE_EQ(window_mean(x, 1, 3), 1.0);
  EXPECT_EQ(moving_average(x, 1), x);
}

TEST(Helpers, GeometricGridAndSlope) {
  const std::vector<int> g = geometric_grid(40, 20000, 16);
  EXPECT_EQ(g.front(), 40);
  EXPECT_EQ(g.back(), 20000);
  for (std::size_t i = 1; i < g.size(); ++i) EXPECT_GT(g[i], g[i - 1]);
  std::vector<double> y;
  for (int t : g) y.push_back(3.0 / std::sqrt(t));
  EXPECT_NEAR(loglog_slope(g, y), -0.5, 1e-12);
}

TEST(Forecast, TableShapeAggregationAndDeterminism) {
  const Series x = synthetic_stationary(5, 600, 0.5, 9, 1);
  const ForecastConfig c = tiny_forecast();
  const ForecastOutput a = run_forecast(x, c, "tiny");
  const ForecastOutput b = run_forecast(x, c, "tiny");
  EXPECT_EQ(a.table.to_csv(), b.table.to_csv());
  for (const char* model : {"STVNN", "VNN", "TPCA", "LastValue"})
    for (int h : {1, 2}) {
      const auto& recs = a.metrics.at({model, h});
      ASSERT_EQ(recs.size(), 2u);
      std::vector<double> s{recs[0].smape, recs[1].smape};
      const double mean = 0.5 * (s[0] + s[1]);
      const double sd = std::sqrt((s[0] - mean) * (s[0] - mean) + (s[1] - mean) * (s[1] - mean));
      bool found_mean = false, found_std = false;
      for (const auto& r : a.table.rows) {
        if (r.model != model || r.t_or_horizon != h || r.metric != "smape") continue;
        if (r.trial == "mean") found_mean = std::abs(r.value - mean) < 1e-12;
        if (r.trial == "std") found_std = std::abs(r.value - sd) < 1e-12;
      }
      EXPECT_TRUE(found_mean && found_std) << model << " h=" << h;
    }
}

TEST(Forecast, TestRowsDoNotInfluenceTraining) {
  Series x = synthetic_stationary(4, 500, 0.5, 9, 2);
  ForecastConfig c = tiny_forecast();
  c.trials = 1;
  c.horizons = {1};
  const ForecastOutput a = run_forecast(x, c, "d");
  Series poisoned = x;
  // same scale (a blown-up stream would diverge online), different values
  poisoned.bottomRows(300) = -x.bottomRows(300).colwise().reverse();
  const ForecastOutput b = run_forecast(poisoned, c, "d");
  for (const char* m : {"STVNN", "VNN", "TPCA"}) EXPECT_EQ(a.val_loss.at({m, 1}), b.val_loss.at({m, 1}));
}

TEST(Forecast, TooShortDataIsAnInputError) {
  EXPECT_THROW(run_forecast(synthetic_stationary(3, 12, 0.5, 9, 1), tiny_forecast(), "d"), InputError);
}

TEST(Grid, SingletonDegenerateAndExhaustive) {
  const Series x = synthetic_stationary(4, 500, 0.5, 9, 4);
  Config base = Config::parse("model.layers = 4\nmodel.T = 2\nmodel.epochs = 3\nmodel.lr = 0.01\n");
  const GridOutput one = grid_search(x, base, {{"model.K", {"2"}}}, "d");
  ASSERT_EQ(one.points.size(), 1u);
  EXPECT_EQ(one.best, 0u);

  const GridOutput lr = grid_search(x, base, {{"model.lr", {"0", "0.01"}}}, "d");
  EXPECT_EQ(lr.points[lr.best].assignment.at("model.lr"), "0.01");

  const GridOutput g = grid_search(x, base, {{"model.K", {"1", "2"}}, {"model.T", {"2", "3"}}}, "d");
  ASSERT_EQ(g.points.size(), 4u);
  for (const auto& p : g.points) EXPECT_LE(g.points[g.best].val_loss, p.val_loss);

  Series poisoned = x;
  poisoned.bottomRows(300).setConstant(1e6);
  const GridOutput gp = grid_search(poisoned, base, {{"model.K", {"1", "2"}}, {"model.T", {"2", "3"}}}, "d");
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(g.points[i].val_loss, gp.points[i].val_loss);
  EXPECT_THROW(grid_search(x, base, {}, "d"), ConfigError);
}

TEST(Shift, FrozenModelHasFlatSegments) {
  ShiftConfig c;
  c.n = 6;
  c.trials = 2;
  c.model.widths = {4};
  c.model.epochs = 2;
  c.model.gamma = 0.0;
  c.model.eta_online = 0.0;
  c.schedule.train_length = 1000;
  c.schedule.segments = {{2000, 0.1}, {2000, 0.6}};
  const ShiftOutput out = run_shift_models(c, {ShiftModel::Stvnn}, "shift");
  const std::vector<double> m = out.mean_loss("STVNN");
  for (int cp : out.change_points) {
    const double first = window_mean(m, cp + 200, 900), second = window_mean(m, cp + 1100, 900);
    EXPECT_NEAR(first / second, 1.0, 0.1);
  }
  EXPECT_EQ(out.change_points, (std::vector<int>{100, 2100}));
}

TEST(Stability, SmallRunProducesCurves) {
  StabilityConfig c;
  c.n = 6;
  c.tails = {0.9};
  c.memories = {2, 3};
  c.trials = 2;
  c.max_t = 600;
  c.log_points = 5;
  c.probes = 4;
  c.reference_samples = 200;
  c.model.widths = {4, 3};
  c.model.epochs = 1;
  const StabilityOutput out = run_stability(c);
  EXPECT_EQ(out.grid.front(), 12);
  EXPECT_EQ(out.grid.back(), 600);
  EXPECT_EQ(out.curves.size(), 3u);
  for (const auto& curve : out.curves) {
    ASSERT_EQ(curve.per_trial.size(), 2u);
    for (double v : curve.mean()) EXPECT_TRUE(std::isfinite(v) && v >= 0.0);
  }
  EXPECT_EQ(out.curves_csv().substr(0, 16), "t,model,T,tail,g");
  bool has_bound = false;
  for (const auto& r : out.table.rows) has_bound |= r.metric == "bound_filter_cov_normalized";
  EXPECT_TRUE(has_bound);
}

// ---------------------------------------------------------------- cli

struct CliResult {
  int code;
  std::string out, err;
};

CliResult cli(std::vector<std::string> args) {
  std::ostringstream o, e;
  const int code = run_cli(args, o, e);
  return {code, o.str(), e.str()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("stvnn_cli_" + std::to_string(::getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  void write(const std::string& name, const std::string& text) const { std::ofstream(path(name)) << text; }
  std::string read(const std::string& name) const {
    std::ifstream f(path(name));
    std::stringstream s;
    s << f.rdbuf();
    return s.str();
  }
  fs::path dir_;
};

TEST_F(CliTest, GenIsDeterministicAndRefusesOverwrite) {
  auto r = cli({"gen", "--kind", "stationary", "--n", "20", "--samples", "10000", "--tail", "0.9", "--seed", "7",
                "--out", path("a.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  cli({"gen", "--kind", "stationary", "--n", "20", "--samples", "10000", "--tail", "0.9", "--seed", "7", "--out",
       path("b.csv")});
  EXPECT_EQ(fnv1a(read("a.csv")), fnv1a(read("b.csv")));
  const SeriesFile f = read_series_csv(path("a.csv"));
  EXPECT_EQ(f.values.rows(), 10000);
  EXPECT_EQ(f.values.cols(), 20);
  r = cli({"gen", "--kind", "stationary", "--samples", "10", "--out", path("a.csv")});
  EXPECT_EQ(r.code, 3);
  r = cli({"gen", "--kind", "stationary", "--samples", "10", "--out", path("a.csv"), "--force"});
  EXPECT_EQ(r.code, 0);
}

TEST_F(CliTest, GenShiftRecordsChangePoints) {
  ASSERT_EQ(cli({"gen", "--kind", "shift", "--seed", "3", "--out", path("s.csv")}).code, 0);
  const auto meta = nlohmann::json::parse(read("s.meta.json"));
  EXPECT_EQ(meta["change_points_test"].get<std::vector<int>>(), (std::vector<int>{0, 1000, 2000, 3000, 4000, 5000}));
  EXPECT_EQ(read_series_csv(path("s.csv")).values.rows(), 10000);
}

TEST_F(CliTest, UsageErrorsNameTheFlag) {
  auto r = cli({"gen", "--kind", "stationary", "--samples", "10"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("--out"), std::string::npos) << r.err;
  r = cli({"gen", "--kind", "stationary", "--out", path("x.csv")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("--samples"), std::string::npos) << r.err;
  EXPECT_EQ(cli({"gen", "--kind", "sideways", "--out", path("x.csv")}).code, 2);
  EXPECT_EQ(cli({}).code, 2);
  EXPECT_EQ(cli({"--help"}).code, 0);
}

TEST_F(CliTest, RunForecastWritesTidyCsvAndManifest) {
  write("cfg.txt", "model.layers = 4\nmodel.T = 2\nmodel.epochs = 1\nforecast.tpca = false\n");
  ASSERT_EQ(cli({"gen", "--kind", "stationary", "--n", "4", "--samples", "400", "--seed", "1", "--out", path("d.csv")}).code, 0);
  auto r = cli({"run", "forecast", "--config", path("cfg.txt"), "--data", path("d.csv"), "--horizons", "1,3",
                "--trials", "2", "--seed", "9", "--out", path("r.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string csv = read("r.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "experiment,model,dataset,trial,t_or_horizon,metric,value");
  EXPECT_NE(csv.find("forecast,STVNN,d,mean,3,smape,"), std::string::npos);
  EXPECT_NE(csv.find("forecast,STVNN,d,std,1,smape,"), std::string::npos);
  const auto manifest = nlohmann::json::parse(read("r.manifest.json"));
  EXPECT_EQ(manifest["seed"], 9);
  EXPECT_EQ(manifest["trial_seeds"].size(), 2u);
  EXPECT_EQ(manifest["dataset"]["fingerprint"].get<std::string>().size(), 16u);
  EXPECT_NE(manifest["config"].get<std::string>().find("model.horizons = 1,3"), std::string::npos);

  // reruns reproduce the results byte for byte
  ASSERT_EQ(cli({"run", "forecast", "--config", path("cfg.txt"), "--data", path("d.csv"), "--horizons", "1,3",
                 "--trials", "2", "--seed", "9", "--out", path("r2.csv")}).code, 0);
  EXPECT_EQ(read("r.csv"), read("r2.csv"));
  EXPECT_EQ(cli({"run", "forecast", "--config", path("cfg.txt"), "--data", path("d.csv"), "--out", path("r.csv")}).code, 3);
}

TEST_F(CliTest, RunErrorsMapToExitCodes) {
  write("bad.txt", "model.K = 2\nmodel.K = 3\n");
  EXPECT_EQ(cli({"run", "forecast", "--config", path("bad.txt"), "--out", path("o.csv")}).code, 2);
  write("typo.txt", "model.kk = 2\n");
  EXPECT_EQ(cli({"run", "forecast", "--config", path("typo.txt"), "--out", path("o.csv")}).code, 2);
  write("broken.csv", "a,b\n1,2\n3,x\n");
  auto r = cli({"run", "forecast", "--data", path("broken.csv"), "--out", path("o.csv")});
  EXPECT_EQ(r.code, 4);
  EXPECT_NE(r.err.find("row 3"), std::string::npos) << r.err;
  write("short.csv", "a,b\n1,2\n3,4\n5,6\n");
  EXPECT_EQ(cli({"run", "forecast", "--data", path("short.csv"), "--out", path("o2.csv")}).code, 4);
  EXPECT_EQ(cli({"run", "nonsense", "--out", path("o3.csv")}).code, 2);
}

TEST_F(CliTest, RunStabilityWritesCurveTable) {
  write("st.txt",
        "stability.n = 5\nstability.tails = 0.9\nstability.T_sweep = 2\nstability.max_t = 200\n"
        "stability.log_points = 3\nstability.probes = 2\nstability.reference_samples = 100\n"
        "model.layers = 3\nstability.epochs = 1\nexperiment.trials = 1\n");
  const auto r = cli({"run", "stability", "--config", path("st.txt"), "--out", path("st.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string curves = read("st.curves.csv");
  EXPECT_EQ(curves.substr(0, curves.find('\n')), "t,model,T,tail,gap");
}

TEST_F(CliTest, CheckpointLifecycle) {
  ASSERT_EQ(cli({"gen", "--kind", "stationary", "--n", "4", "--samples", "500", "--seed", "2", "--out", path("d.csv")}).code, 0);
  write("c.txt", "model.layers = 4\nmodel.epochs = 1\n");
  auto r = cli({"checkpoint", "create", "--config", path("c.txt"), "--data", path("d.csv"), "--out", path("m.ckpt")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(cli({"checkpoint", "roundtrip", "--in", path("m.ckpt")}).code, 0);
  EXPECT_EQ(cli({"checkpoint", "verify", "--in", path("m.ckpt")}).code, 0);
  // streaming in two halves matches one pass
  ASSERT_EQ(cli({"checkpoint", "stream", "--in", path("m.ckpt"), "--data", path("d.csv"), "--from", "150", "--steps",
                 "100", "--out", path("full.ckpt"), "--predictions", path("full.csv")}).code, 0);
  ASSERT_EQ(cli({"checkpoint", "stream", "--in", path("m.ckpt"), "--data", path("d.csv"), "--from", "150", "--steps",
                 "50", "--out", path("half.ckpt")}).code, 0);
  ASSERT_EQ(cli({"checkpoint", "stream", "--in", path("half.ckpt"), "--data", path("d.csv"), "--from", "200", "--steps",
                 "50", "--out", path("both.ckpt"), "--predictions", path("second.csv")}).code, 0);
  EXPECT_EQ(read("full.ckpt"), read("both.ckpt"));
  const std::string full = read("full.csv"), second = read("second.csv");
  EXPECT_EQ(full.substr(full.rfind('\n', full.size() - 2)), second.substr(second.rfind('\n', second.size() - 2)));

  const std::string bytes = read("m.ckpt");
  std::ofstream(path("cut.ckpt"), std::ios::binary) << bytes.substr(0, bytes.size() - 20);
  r = cli({"checkpoint", "verify", "--in", path("cut.ckpt")});
  EXPECT_EQ(r.code, 4);
  EXPECT_NE(r.err.find("checksum"), std::string::npos) << r.err;
}

}  // namespace
}  // namespace stvnn
