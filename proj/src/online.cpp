#include "stvnn/online.hpp"

#include "stvnn/optim.hpp"

namespace stvnn {

NetworkForecaster::NetworkForecaster(NetworkParams params, CovarianceState cov, OnlineOptions options)
    : params_(std::move(params)), cov_(std::move(cov)), options_(std::move(options)) {
  require(options_.horizon >= 1, "online: horizon must be >= 1");
  require(options_.lag_features >= 1, "online: lag_features must be >= 1");
  require(options_.eta >= 0.0, "online: eta must be >= 0");
  require(params_.input_width() == options_.lag_features, "online: input width does not match the lag layout");
  if (options_.fixed_covariance)
    require(options_.fixed_covariance->rows() == cov_.dim() && options_.fixed_covariance->cols() == cov_.dim(),
            "online: fixed covariance shape mismatch");
}

int NetworkForecaster::history_needed() const {
  return params_.receptive_field() + options_.lag_features - 1 + options_.horizon - 1;
}

Matrix NetworkForecaster::shift_operator() const {
  return options_.fixed_covariance ? *options_.fixed_covariance : trace_normalize(cov_.cov);
}

// Input frames (oldest first) of the window whose newest sample is `back`
// steps before the newest sample in the history.
std::vector<Matrix> NetworkForecaster::frames_ending(int back) const {
  const int field = params_.receptive_field();
  const int lags = options_.lag_features;
  const int newest = static_cast<int>(history_.size()) - 1 - back;
  std::vector<Matrix> frames;
  frames.reserve(field);
  for (int t = newest - field + 1; t <= newest; ++t) {
    Matrix f(cov_.dim(), lags);
    for (int j = 0; j < lags; ++j) f.col(j) = history_[t - j];
    frames.push_back(std::move(f));
  }
  return frames;
}

void NetworkForecaster::push(const Vector& x) {
  history_.push_back(x);
  while (static_cast<int>(history_.size()) > history_needed()) history_.pop_front();
}

void NetworkForecaster::prime(const Vector& x) {
  if (x.size() != cov_.dim()) throw PreconditionError("online: sample dimension mismatch");
  push(x);
}

std::optional<Matrix> NetworkForecaster::peek() const {
  const int window = params_.receptive_field() + options_.lag_features - 1;
  if (static_cast<int>(history_.size()) < window) return std::nullopt;
  const auto frames = frames_ending(0);
  return forward_sequence(params_, shift_operator(), frames).predictions.front();
}

std::optional<StepRecord> NetworkForecaster::step(const Vector& x) {
  if (x.size() != cov_.dim()) throw PreconditionError("online: sample dimension mismatch");
  if (!x.allFinite()) throw InputError("online: non-finite sample");
  const int window = params_.receptive_field() + options_.lag_features - 1;
  const int tau = options_.horizon;
  const Matrix shift = shift_operator();

  // (1) forecast from the window that ends just before x.
  std::optional<SequenceOutput> fresh;
  if (static_cast<int>(history_.size()) >= window) {
    fresh = forward_sequence(params_, shift, frames_ending(0));
    pending_.push_back(PendingForecast{steps_ + static_cast<std::uint64_t>(tau) - 1, fresh->predictions.front()});
  }

  // (2) score the forecast that targeted this sample, (3) learn from it.
  std::optional<StepRecord> record;
  if (!pending_.empty() && pending_.front().target_step == steps_) {
    StepRecord r;
    r.prediction = std::move(pending_.front().prediction);
    r.target = x;
    r.loss = mse_loss(r.prediction, r.target);
    pending_.pop_front();
    if (options_.update_params && options_.eta > 0.0) {
      SequenceOutput origin = tau == 1 ? std::move(*fresh) : forward_sequence(params_, shift, frames_ending(tau - 1));
      const Matrix d = mse_gradient(origin.predictions.front(), r.target);
      const NetworkParams grad = backward_sequence(params_, origin.cache, shift, std::span<const Matrix>(&d, 1));
      sgd_step_in_place(params_, grad, options_.eta);
      if (!params_.all_finite()) throw NumericalError("online: parameters diverged");
    }
    record = std::move(r);
  }

  // (4) covariance, (5) window.
  if (options_.update_covariance && !options_.fixed_covariance) update_in_place(cov_, x);
  push(x);
  ++steps_;
  return record;
}

void NetworkForecaster::restore(std::deque<Vector> history, std::deque<PendingForecast> pending,
                                std::uint64_t steps) {
  for (const auto& v : history)
    if (v.size() != cov_.dim()) throw CorruptionError("online: restored history has the wrong dimension");
  history_ = std::move(history);
  pending_ = std::move(pending);
  steps_ = steps;
}

void LastValueForecaster::prime(const Vector& x) {
  history_.push_back(x);
  while (static_cast<int>(history_.size()) > horizon_) history_.pop_front();
}

std::optional<StepRecord> LastValueForecaster::step(const Vector& x) {
  std::optional<StepRecord> out;
  if (static_cast<int>(history_.size()) == horizon_) {
    StepRecord r;
    r.prediction = history_.front();
    r.target = x;
    r.loss = mse_loss(r.prediction, r.target);
    out = std::move(r);
  }
  prime(x);
  return out;
}

OnlineStepResult online_step(NetworkParams params, CovarianceState cov_state, SignalWindow window,
                             const Vector& new_sample, double eta) {
  require(eta >= 0.0, "online_step: eta must be >= 0");
  if (new_sample.size() != cov_state.dim()) throw PreconditionError("online_step: sample dimension mismatch");
  const Matrix shift = trace_normalize(cov_state.cov);
  ForwardResult fr = forward(params, shift, window);
  OnlineStepResult out;
  out.prediction = fr.prediction;
  const Matrix target = new_sample;
  out.loss = mse_loss(out.prediction, target);
  if (eta > 0.0) sgd_step_in_place(params, backward(params, fr.cache, shift, target), eta);
  update_in_place(cov_state, new_sample);
  window.frames.insert(window.frames.begin(), Matrix(new_sample));
  window.frames.pop_back();
  out.params = std::move(params);
  out.cov_state = std::move(cov_state);
  out.window = std::move(window);
  return out;
}

}  // namespace stvnn
