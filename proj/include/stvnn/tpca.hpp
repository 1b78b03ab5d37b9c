#pragma once

#include <deque>
#include <optional>

#include "stvnn/online.hpp"
#include "stvnn/spectral.hpp"
#include "stvnn/stream_stats.hpp"
#include "stvnn/training.hpp"

namespace stvnn {

// [x_t; x_{t-1}; ...; x_{t-T+1}] from a single-feature window (newest first).
Vector build_extended_sample(const SignalWindow& window);

// Extended sample ending at `row` of a series (rows row-T+1..row, newest first).
Vector extended_sample_at(const Series& series, int row, int memory);

struct TpcaFit {
  CovarianceState state;  // over dimension N*T
  SpectralDecomposition decomp;
};

// Batch extended covariance (rows of `samples` are extended vectors) and its
// eigendecomposition.
TpcaFit tpca_fit(const Series& samples, UpdateMode mode = Stationary{});

// First r principal coordinates V^T x.
Vector tpca_project(const SpectralDecomposition& decomp, const Vector& x, int r);

struct TpcaModel {
  int memory = 2;      // T
  int components = 0;  // r
  bool center = true;  // subtract the running extended mean before projecting
  Mlp readout;         // r -> H -> N
  double slope = 0.1;
};

// Projected (and optionally centered) features for one extended sample.
Vector tpca_features(const TpcaModel& model, const TpcaFit& fit, const Vector& extended);

// N x 1 forecast.
Matrix tpca_predict(const TpcaModel& model, const TpcaFit& fit, const Vector& extended);

TpcaModel init_tpca(int nodes, int memory, int components, int hidden, std::mt19937_64& rng, bool center = true);

struct TpcaTrainReport {
  TpcaModel model;
  std::vector<double> val_loss;
  int best_epoch = -1;
  double best_val = 0.0;
};

// Trains the readout on projections from a fixed fit. Origins follow the
// same convention as the network tasks (targets from `task`).
TpcaTrainReport train_tpca(const TpcaModel& init, const TpcaFit& fit, const Series& series, const ForecastTask& task,
                           PositionRange train, PositionRange val, const TrainConfig& config);

double tpca_evaluate_loss(const TpcaModel& model, const TpcaFit& fit, const Series& series, const ForecastTask& task,
                          PositionRange range);

struct TpcaOnlineOptions {
  double eta = 1e-3;
  int horizon = 1;
  int refresh = 1;  // recompute the eigendecomposition every `refresh` covariance updates
  bool update_params = true;
  bool update_covariance = true;
};

// Online TPCA: same predict / score / learn / update / slide order as the
// network forecaster, on the extended sample stream.
class TpcaForecaster : public StreamingForecaster {
 public:
  TpcaForecaster(TpcaModel model, TpcaFit fit, TpcaOnlineOptions options);
  void prime(const Vector& x) override;
  std::optional<StepRecord> step(const Vector& x) override;

  const TpcaModel& model() const { return model_; }
  const TpcaFit& fit() const { return fit_; }

 private:
  Vector extended(int back) const;
  void push(const Vector& x);

  TpcaModel model_;
  TpcaFit fit_;
  TpcaOnlineOptions options_;
  std::deque<Vector> history_;
  std::deque<PendingForecast> pending_;
  std::uint64_t steps_ = 0;
  int since_refresh_ = 0;
};

// VNN baseline: a T = 1 network whose input frame stacks the window's lags as
// node features. `window` is newest first with single-feature frames.
Matrix vnn_baseline_forward(const NetworkParams& params, const Matrix& cov, const SignalWindow& window);

// Stacks the lags of a newest-first window into one N x T frame.
Matrix stack_lags(const SignalWindow& window);

}  // namespace stvnn
