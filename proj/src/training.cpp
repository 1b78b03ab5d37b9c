#include "stvnn/training.hpp"

#include <algorithm>
#include <numeric>
#include <random>

namespace stvnn {

ForecastTask make_task(const Series& series, int horizon, int lag_features) {
  require(horizon >= 1, "make_task: horizon must be >= 1");
  require(lag_features >= 1, "make_task: lag_features must be >= 1");
  if (series.rows() < 1 || series.cols() < 1) throw InputError("make_task: empty series");
  if (!series.allFinite()) throw InputError("make_task: non-finite series");
  const int rows = static_cast<int>(series.rows());
  const Eigen::Index n = series.cols();
  ForecastTask task;
  task.horizon = horizon;
  task.inputs.reserve(rows);
  for (int t = 0; t < rows; ++t) {
    Matrix frame(n, lag_features);
    for (int j = 0; j < lag_features; ++j) frame.col(j) = series.row(std::max(0, t - j)).transpose();
    task.inputs.push_back(std::move(frame));
  }
  for (int t = 0; t + horizon < rows; ++t) task.targets.push_back(series.row(t + horizon).transpose());
  return task;
}

PositionRange origins_for_rows(int row_begin, int row_end, int horizon, int history, int first_row) {
  PositionRange r;
  r.begin = std::max(row_begin - horizon, first_row + history - 1);
  r.end = row_end - horizon;
  if (r.end < r.begin) r.end = r.begin;
  return r;
}

namespace {

constexpr int kEvalChunk = 256;

void check_range(const NetworkParams& params, const ForecastTask& task, PositionRange range) {
  const int field = params.receptive_field();
  if (range.size() > 0) {
    if (range.begin < field - 1) throw PreconditionError("range starts before a full input window exists");
    if (range.end > static_cast<int>(task.targets.size())) throw PreconditionError("range runs past the targets");
  }
}

// Runs fn(position, prediction) for each origin, forward passes chunked to bound memory.
template <class Fn>
void for_each_prediction(const NetworkParams& params, const Matrix& cov, const ForecastTask& task,
                         PositionRange range, Fn&& fn) {
  check_range(params, task, range);
  const int field = params.receptive_field();
  for (int s = range.begin; s < range.end; s += kEvalChunk) {
    const int e = std::min(range.end, s + kEvalChunk);
    std::span<const Matrix> in(task.inputs.data() + (s - field + 1), static_cast<std::size_t>(e - s + field - 1));
    SequenceOutput out = forward_sequence(params, cov, in);
    for (int p = s; p < e; ++p) fn(p, out.predictions[p - s]);
  }
}

}  // namespace

double evaluate_loss(const NetworkParams& params, const Matrix& cov, const ForecastTask& task, PositionRange range) {
  if (range.size() == 0) throw InputError("evaluate_loss: empty range");
  double total = 0.0;
  for_each_prediction(params, cov, task, range,
                      [&](int p, const Matrix& y) { total += mse_loss(y, task.targets[p]); });
  return total / range.size();
}

std::vector<Matrix> predict_range(const NetworkParams& params, const Matrix& cov, const ForecastTask& task,
                                  PositionRange range) {
  std::vector<Matrix> out;
  out.reserve(range.size());
  for_each_prediction(params, cov, task, range, [&](int, const Matrix& y) { out.push_back(y); });
  return out;
}

TrainReport train_offline(const NetworkParams& init, const Matrix& cov, const ForecastTask& task, PositionRange train,
                          PositionRange val, const TrainConfig& config) {
  if (train.size() == 0) throw InputError("train_offline: empty training range");
  require(config.batch >= 1, "train_offline: batch must be >= 1");
  require(config.epochs >= 0, "train_offline: epochs must be >= 0");
  const int field = init.receptive_field();
  if (field > static_cast<int>(task.inputs.size())) throw InputError("train_offline: window longer than the dataset");
  check_range(init, task, train);
  check_range(init, task, val);

  TrainReport report;
  report.params = init;
  if (config.epochs == 0) return report;

  NetworkParams params = init;
  AdamState adam = adam_init(params);
  std::mt19937_64 rng(config.seed);

  std::vector<int> starts;
  for (int s = train.begin; s < train.end; s += config.batch) starts.push_back(s);

  const bool has_val = val.size() > 0;
  report.best_val = has_val ? evaluate_loss(params, cov, task, val) : 0.0;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(starts.begin(), starts.end(), rng);
    double epoch_loss = 0.0;
    for (int s : starts) {
      const int e = std::min(train.end, s + config.batch);
      const int count = e - s;
      std::span<const Matrix> in(task.inputs.data() + (s - field + 1), static_cast<std::size_t>(count + field - 1));
      SequenceOutput out = forward_sequence(params, cov, in);
      std::vector<Matrix> d(count);
      for (int p = 0; p < count; ++p) {
        const Matrix& target = task.targets[s + p];
        epoch_loss += mse_loss(out.predictions[p], target);
        d[p] = mse_gradient(out.predictions[p], target) / static_cast<double>(count);
      }
      const NetworkParams grad = backward_sequence(params, out.cache, cov, d);
      if (config.optimizer == OptimizerKind::Adam)
        adam_step_in_place(params, grad, adam, config.lr);
      else
        sgd_step_in_place(params, grad, config.lr);
      if (!params.all_finite()) throw NumericalError("train_offline: parameters diverged");
    }
    report.train_loss.push_back(epoch_loss / train.size());

    if (has_val) {
      const double v = evaluate_loss(params, cov, task, val);
      report.val_loss.push_back(v);
      if (v < report.best_val) {
        report.best_val = v;
        report.best_epoch = epoch;
        report.params = params;
      }
    } else {
      report.best_epoch = epoch;
      report.params = params;
    }
  }
  return report;
}

}  // namespace stvnn
