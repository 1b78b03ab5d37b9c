#pragma once

#include <cstdint>
#include <vector>

#include "stvnn/network.hpp"
#include "stvnn/optim.hpp"

namespace stvnn {

// Frames and horizon targets over one chronological stream. inputs[t] is the
// model input at time t (N x F_in); targets[t] is the value to forecast from
// time t (N x D_out) and exists for t < targets.size().
struct ForecastTask {
  std::vector<Matrix> inputs;
  std::vector<Matrix> targets;
  int horizon = 1;
};

// Half-open range of forecast origins [begin, end).
struct PositionRange {
  int begin = 0;
  int end = 0;
  int size() const { return end > begin ? end - begin : 0; }
};

// lag_features = 1 gives one column per node (x_t). lag_features = T stacks
// x_t, x_{t-1}, ..., x_{t-T+1} as columns; frames earlier than T-1 repeat
// the first sample and should not be used as origins.
ForecastTask make_task(const Series& series, int horizon, int lag_features = 1);

// Forecast origins whose target row lies in [row_begin, row_end). Input
// history may reach back before row_begin (earlier rows are already observed)
// but never before `first_row`.
PositionRange origins_for_rows(int row_begin, int row_end, int horizon, int history, int first_row = 0);

struct TrainConfig {
  int epochs = 40;
  int batch = 32;
  double lr = 1e-3;
  OptimizerKind optimizer = OptimizerKind::Adam;
  std::uint64_t seed = 0;
};

struct TrainReport {
  NetworkParams params;  // best validation epoch (or the input when epochs == 0)
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  int best_epoch = -1;  // -1: initial parameters kept
  double best_val = 0.0;
};

// Mean squared error over every origin in `range`.
double evaluate_loss(const NetworkParams& params, const Matrix& cov, const ForecastTask& task, PositionRange range);

// Predictions for every origin in `range`, in order.
std::vector<Matrix> predict_range(const NetworkParams& params, const Matrix& cov, const ForecastTask& task,
                                  PositionRange range);

// Minibatch training with the covariance held fixed. Minibatches are
// contiguous runs of origins, visited in a seeded shuffled order.
TrainReport train_offline(const NetworkParams& init, const Matrix& cov, const ForecastTask& task, PositionRange train,
                          PositionRange val, const TrainConfig& config);

}  // namespace stvnn
