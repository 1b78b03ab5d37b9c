#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stvnn/config.hpp"
#include "stvnn/datagen.hpp"
#include "stvnn/metrics.hpp"
#include "stvnn/network.hpp"
#include "stvnn/optim.hpp"

namespace stvnn {

// One line of the long-format results table.
struct ResultRow {
  std::string experiment;
  std::string model;
  std::string dataset;
  std::string trial;  // trial index, "mean" or "std"
  double t_or_horizon = 0.0;
  std::string metric;
  double value = 0.0;
};

struct ResultTable {
  std::vector<ResultRow> rows;

  void add(ResultRow row) { rows.push_back(std::move(row)); }
  void append(const ResultTable& other);
  std::string to_csv() const;
};

struct ModelSpec {
  int order = 2;
  int memory = 3;
  std::vector<int> widths{32, 16};
  double gamma = 0.1;
  double lr = 1e-3;
  std::optional<double> eta_online;  // defaults to lr
  OptimizerKind optimizer = OptimizerKind::Adam;
  int epochs = 40;
  int batch = 32;
  ReadoutMode readout = ReadoutMode::PerNode;

  double online_rate() const { return eta_online.value_or(lr); }
};

struct TpcaSpec {
  int memory = 2;
  int components = 0;  // 0 -> N
  int refresh = 1;
  bool center = true;
  int hidden = 0;  // 0 -> last STVNN width
};

inline ModelSpec with_gamma(ModelSpec m, double g) {
  m.gamma = g;
  return m;
}
inline ModelSpec with_epochs(ModelSpec m, int e) {
  m.epochs = e;
  return m;
}

inline ModelSpec with_online_rate(ModelSpec m, double eta) {
  m.eta_online = eta;
  return m;
}

ModelSpec model_spec_from(const Config& c, ModelSpec base = {});
TpcaSpec tpca_spec_from(const Config& c, TpcaSpec base = {});

// Config keys understood by the experiment runners.
std::vector<std::string> known_config_keys();

// ---- forecasting ----

struct ForecastConfig {
  ModelSpec model = with_gamma(ModelSpec{}, 0.01);
  TpcaSpec tpca;
  std::array<double, 3> split{0.2, 0.1, 0.7};
  std::vector<int> horizons{1, 3, 5};
  int trials = 5;
  std::uint64_t seed = 0;
  SmapeVariant smape = SmapeVariant::Symmetric;
  bool run_vnn = true;
  bool run_tpca = true;
  bool run_last_value = true;
};

ForecastConfig forecast_config_from(const Config& c);

struct ForecastOutput {
  ResultTable table;
  // (model, horizon) -> per-trial test metrics
  std::map<std::pair<std::string, int>, std::vector<MetricsRecord>> metrics;
  // (model, horizon) -> per-trial best validation loss (standardized units)
  std::map<std::pair<std::string, int>, std::vector<double>> val_loss;
};

// Offline training on the train split, then online streaming over validation
// and test; metrics on the de-standardized test forecasts.
ForecastOutput run_forecast(const Series& series, const ForecastConfig& config, const std::string& dataset);

// ---- distribution shift and ablation ----

enum class ShiftModel { Stvnn, Stvf, Tpca, FrozenParams, FixedCovariance };
std::string shift_model_name(ShiftModel m);

struct ShiftConfig {
  // online rate picked from a 0.003 / 0.01 / 0.03 sweep on this schedule
  ModelSpec model = with_online_rate(with_epochs(with_gamma(ModelSpec{}, 0.1), 20), 0.01);
  TpcaSpec tpca;
  int n = 20;
  ShiftSchedule schedule = ShiftSchedule::standard();
  double val_fraction = 0.1;  // tail of the training block used for validation and as stream lead-in
  int trials = 10;
  std::uint64_t seed = 0;
  int smoothing = 25;  // centered moving average used for spike detection
  int log_smoothing = 200;
};

ShiftConfig shift_config_from(const Config& c);

struct ShiftOutput {
  int stream_length = 0;
  std::vector<int> change_points;  // indices into the scored stream
  std::map<std::string, std::vector<std::vector<double>>> losses;  // model -> trial -> per-step loss
  ResultTable table;

  std::vector<double> mean_loss(const std::string& model) const;
};

ShiftOutput run_shift_models(const ShiftConfig& config, const std::vector<ShiftModel>& models,
                             const std::string& experiment);
ShiftOutput run_shift(const ShiftConfig& config);
ShiftOutput run_ablation(const ShiftConfig& config);

// Centered moving average; windows are clipped at the ends.
std::vector<double> moving_average(const std::vector<double>& x, int window);

// Index of the maximum of x over [c - radius, c + radius] (clipped).
int local_argmax(const std::vector<double>& x, int c, int radius);

// Mean of x over [begin, begin + length) (clipped).
double window_mean(const std::vector<double>& x, int begin, int length);

// ---- stability ----

struct StabilityConfig {
  int n = 20;
  std::vector<double> tails{0.1, 0.9};
  std::vector<int> memories{2, 3, 5, 8};
  int tpca_memory = 2;
  int trials = 10;
  int max_t = 20000;
  int log_points = 16;
  int burn_in = 0;  // 0 -> 2N
  int probes = 32;
  int tau = 9;
  ModelSpec model = with_epochs(ModelSpec{}, 2);
  int reference_samples = 2000;  // samples used to fit the reference parameters
  std::uint64_t seed = 0;
  double epsilon = 2.0;
  double u = 2.0;
};

StabilityConfig stability_config_from(const Config& c);

struct StabilityCurve {
  std::string model;  // "STVNN" or "TPCA"
  int memory = 0;
  double tail = 0.0;
  std::vector<std::vector<double>> per_trial;  // trial -> gap per logged t

  std::vector<double> mean() const;
  std::vector<double> median() const;
};

struct StabilityOutput {
  std::vector<int> grid;  // logged t
  std::vector<StabilityCurve> curves;
  ResultTable table;

  const StabilityCurve& curve(const std::string& model, int memory, double tail) const;
  std::string curves_csv() const;  // t, model, T, tail, gap (trial mean)
};

StabilityOutput run_stability(const StabilityConfig& config);

// Geometric grid of integers in [lo, hi], deduplicated, including both ends.
std::vector<int> geometric_grid(int lo, int hi, int points);

// Least-squares slope of log(y) against log(x).
double loglog_slope(const std::vector<int>& x, const std::vector<double>& y);

// ---- grid search ----

struct GridPoint {
  std::map<std::string, std::string> assignment;
  double val_loss = 0.0;
  std::size_t parameter_count = 0;
};

struct GridOutput {
  std::vector<GridPoint> points;
  std::size_t best = 0;
  ResultTable table;
};

// Exhaustive sweep over the cartesian product of `grids` (config key -> values).
// Only the train and validation rows are read; ties go to fewer parameters,
// then to the lexicographically smaller assignment.
GridOutput grid_search(const Series& series, const Config& base, const std::map<std::string, std::vector<std::string>>& grids,
                       const std::string& dataset);

}  // namespace stvnn
