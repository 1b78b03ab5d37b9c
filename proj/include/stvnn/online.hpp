#pragma once

#include <deque>
#include <optional>

#include "stvnn/network.hpp"
#include "stvnn/stream_stats.hpp"

namespace stvnn {

// A scored forecast: made before `target` was observed.
struct StepRecord {
  Matrix prediction;  // N x 1
  Matrix target;      // N x 1
  double loss = 0.0;  // mse_loss(prediction, target)
};

// One model driven sample by sample. step() consumes the next observation and
// returns the forecast that targeted it, if any.
class StreamingForecaster {
 public:
  virtual ~StreamingForecaster() = default;
  // Observed history before the scored stream starts; nothing is learned.
  virtual void prime(const Vector& x) = 0;
  virtual std::optional<StepRecord> step(const Vector& x) = 0;
};

struct OnlineOptions {
  double eta = 1e-3;
  int horizon = 1;
  int lag_features = 1;  // > 1: lags stacked as node features (VNN layout)
  bool update_params = true;
  bool update_covariance = true;
  std::optional<Matrix> fixed_covariance;  // used verbatim as the shift operator
};

struct PendingForecast {
  std::uint64_t target_step = 0;
  Matrix prediction;
};

// STVNN / STVF / VNN online model. Per sample: forecast from the current
// window, score the forecast that targets this sample, one SGD step on that
// loss, covariance update, then slide the window.
class NetworkForecaster : public StreamingForecaster {
 public:
  NetworkForecaster(NetworkParams params, CovarianceState cov, OnlineOptions options);

  void prime(const Vector& x) override;
  std::optional<StepRecord> step(const Vector& x) override;

  // Forecast from the current window without changing any state.
  std::optional<Matrix> peek() const;

  const NetworkParams& params() const { return params_; }
  const CovarianceState& covariance() const { return cov_; }
  const OnlineOptions& options() const { return options_; }
  Matrix shift_operator() const;

  // Raw samples, oldest first, and outstanding forecasts; for checkpoints.
  const std::deque<Vector>& history() const { return history_; }
  const std::deque<PendingForecast>& pending() const { return pending_; }
  std::uint64_t steps() const { return steps_; }
  void restore(std::deque<Vector> history, std::deque<PendingForecast> pending, std::uint64_t steps);

 private:
  int history_needed() const;
  std::vector<Matrix> frames_ending(int back) const;
  void push(const Vector& x);

  NetworkParams params_;
  CovarianceState cov_;
  OnlineOptions options_;
  std::deque<Vector> history_;
  std::deque<PendingForecast> pending_;
  std::uint64_t steps_ = 0;
};

// Persistence baseline: forecasts the last observed value.
class LastValueForecaster : public StreamingForecaster {
 public:
  explicit LastValueForecaster(int horizon = 1) : horizon_(horizon) {}
  void prime(const Vector& x) override;
  std::optional<StepRecord> step(const Vector& x) override;

 private:
  int horizon_;
  std::deque<Vector> history_;
};

struct OnlineStepResult {
  NetworkParams params;
  CovarianceState cov_state;
  SignalWindow window;
  Matrix prediction;
  double loss = 0.0;
};

// One-step-ahead online update on explicit values. `window` is newest first
// and spans the receptive field; `new_sample` is the realized next value.
OnlineStepResult online_step(NetworkParams params, CovarianceState cov_state, SignalWindow window,
                             const Vector& new_sample, double eta);

}  // namespace stvnn
