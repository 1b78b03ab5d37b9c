#include "stvnn/tpca.hpp"

#include <algorithm>
#include <random>

#include "stvnn/optim.hpp"

namespace stvnn {

Vector build_extended_sample(const SignalWindow& window) {
  if (window.length() < 1) throw PreconditionError("build_extended_sample: empty window");
  const Eigen::Index n = window.frames.front().rows();
  Vector out(n * window.length());
  for (int lag = 0; lag < window.length(); ++lag) {
    const Matrix& f = window.frames[lag];
    if (f.cols() != 1) throw PreconditionError("build_extended_sample: multi-feature windows are not supported");
    if (f.rows() != n) throw PreconditionError("build_extended_sample: frame shapes differ");
    out.segment(lag * n, n) = f.col(0);
  }
  return out;
}

Vector extended_sample_at(const Series& series, int row, int memory) {
  require(memory >= 1, "extended_sample_at: memory must be >= 1");
  require(row - memory + 1 >= 0 && row < series.rows(), "extended_sample_at: row out of range");
  const Eigen::Index n = series.cols();
  Vector out(n * memory);
  for (int lag = 0; lag < memory; ++lag) out.segment(lag * n, n) = series.row(row - lag).transpose();
  return out;
}

TpcaFit tpca_fit(const Series& samples, UpdateMode mode) {
  if (samples.rows() < 2) throw InputError("tpca_fit: need at least two windows");
  TpcaFit fit;
  fit.state = init_from_batch(samples, mode);
  if (fit.state.cov.trace() <= 1e-15) throw DegenerateCovarianceError("tpca_fit: rank-0 data");
  fit.decomp = sym_eig(fit.state.cov);
  return fit;
}

Vector tpca_project(const SpectralDecomposition& decomp, const Vector& x, int r) {
  if (x.size() != decomp.size()) throw PreconditionError("tpca_project: dimension mismatch");
  if (r < 1 || r > decomp.size()) throw PreconditionError("tpca_project: component count out of range");
  return decomp.eigenvectors.leftCols(r).transpose() * x;
}

Vector tpca_features(const TpcaModel& model, const TpcaFit& fit, const Vector& extended) {
  if (model.center) return tpca_project(fit.decomp, extended - fit.state.mean, model.components);
  return tpca_project(fit.decomp, extended, model.components);
}

Matrix tpca_predict(const TpcaModel& model, const TpcaFit& fit, const Vector& extended) {
  const Vector f = tpca_features(model, fit, extended);
  return mlp_forward(model.readout, f.transpose(), model.slope).transpose();
}

TpcaModel init_tpca(int nodes, int memory, int components, int hidden, std::mt19937_64& rng, bool center) {
  require(nodes >= 1 && memory >= 1, "init_tpca: invalid shape");
  require(components >= 1 && components <= nodes * memory, "init_tpca: component count out of range");
  require(hidden >= 1, "init_tpca: hidden width must be >= 1");
  TpcaModel m;
  m.memory = memory;
  m.components = components;
  m.center = center;
  m.readout = init_mlp(components, hidden, nodes, rng);
  return m;
}

namespace {

// Feature rows for a range of origins, one row per origin.
Matrix feature_rows(const TpcaModel& model, const TpcaFit& fit, const Series& series, PositionRange range) {
  if (range.size() > 0 && range.begin < model.memory - 1)
    throw PreconditionError("tpca: range starts before a full window exists");
  Matrix rows(range.size(), model.components);
  for (int p = range.begin; p < range.end; ++p)
    rows.row(p - range.begin) = tpca_features(model, fit, extended_sample_at(series, p, model.memory)).transpose();
  return rows;
}

Matrix target_rows(const ForecastTask& task, PositionRange range) {
  if (range.end > static_cast<int>(task.targets.size())) throw PreconditionError("tpca: range runs past the targets");
  const Eigen::Index n = task.targets.front().rows();
  Matrix rows(range.size(), n);
  for (int p = range.begin; p < range.end; ++p) rows.row(p - range.begin) = task.targets[p].col(0).transpose();
  return rows;
}

NetworkParams wrap(const Mlp& mlp) {
  NetworkParams p;
  p.readout = mlp;
  return p;
}

}  // namespace

double tpca_evaluate_loss(const TpcaModel& model, const TpcaFit& fit, const Series& series, const ForecastTask& task,
                          PositionRange range) {
  if (range.size() == 0) throw InputError("tpca_evaluate_loss: empty range");
  const Matrix x = feature_rows(model, fit, series, range);
  const Matrix y = target_rows(task, range);
  return (mlp_forward(model.readout, x, model.slope) - y).squaredNorm() / static_cast<double>(y.size());
}

TpcaTrainReport train_tpca(const TpcaModel& init, const TpcaFit& fit, const Series& series, const ForecastTask& task,
                           PositionRange train, PositionRange val, const TrainConfig& config) {
  if (train.size() == 0) throw InputError("train_tpca: empty training range");
  require(config.batch >= 1 && config.epochs >= 0, "train_tpca: invalid config");
  TpcaTrainReport report;
  report.model = init;
  if (config.epochs == 0) return report;

  const Matrix x = feature_rows(init, fit, series, train);
  const Matrix y = target_rows(task, train);
  const bool has_val = val.size() > 0;
  const Matrix xv = has_val ? feature_rows(init, fit, series, val) : Matrix();
  const Matrix yv = has_val ? target_rows(task, val) : Matrix();
  auto val_loss = [&](const Mlp& m) {
    return (mlp_forward(m, xv, init.slope) - yv).squaredNorm() / static_cast<double>(yv.size());
  };

  NetworkParams params = wrap(init.readout);
  AdamState adam = adam_init(params);
  std::mt19937_64 rng(config.seed);
  std::vector<int> starts;
  for (int s = 0; s < train.size(); s += config.batch) starts.push_back(s);
  report.best_val = has_val ? val_loss(init.readout) : 0.0;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(starts.begin(), starts.end(), rng);
    for (int s : starts) {
      const int count = std::min(config.batch, train.size() - s);
      MlpTrace trace;
      const Matrix out = mlp_forward(*params.readout, x.middleRows(s, count), init.slope, &trace);
      const Matrix d = 2.0 * (out - y.middleRows(s, count)) / static_cast<double>(count * y.cols());
      NetworkParams grad = params.zeros_like();
      mlp_backward(*params.readout, trace, d, init.slope, *grad.readout);
      if (config.optimizer == OptimizerKind::Adam)
        adam_step_in_place(params, grad, adam, config.lr);
      else
        sgd_step_in_place(params, grad, config.lr);
    }
    if (!params.all_finite()) throw NumericalError("train_tpca: parameters diverged");
    if (has_val) {
      const double v = val_loss(*params.readout);
      report.val_loss.push_back(v);
      if (v < report.best_val) {
        report.best_val = v;
        report.best_epoch = epoch;
        report.model.readout = *params.readout;
      }
    } else {
      report.best_epoch = epoch;
      report.model.readout = *params.readout;
    }
  }
  return report;
}

TpcaForecaster::TpcaForecaster(TpcaModel model, TpcaFit fit, TpcaOnlineOptions options)
    : model_(std::move(model)), fit_(std::move(fit)), options_(options) {
  require(options_.horizon >= 1, "tpca online: horizon must be >= 1");
  require(options_.refresh >= 1, "tpca online: refresh must be >= 1");
  require(fit_.state.dim() == fit_.decomp.size(), "tpca online: fit is inconsistent");
  require(fit_.state.dim() % model_.memory == 0, "tpca online: fit dimension is not a multiple of T");
}

Vector TpcaForecaster::extended(int back) const {
  const int n = static_cast<int>(fit_.state.dim()) / model_.memory;
  const int newest = static_cast<int>(history_.size()) - 1 - back;
  Vector out(n * model_.memory);
  for (int lag = 0; lag < model_.memory; ++lag) out.segment(lag * n, n) = history_[newest - lag];
  return out;
}

void TpcaForecaster::push(const Vector& x) {
  history_.push_back(x);
  while (static_cast<int>(history_.size()) > model_.memory + options_.horizon - 1) history_.pop_front();
}

void TpcaForecaster::prime(const Vector& x) {
  if (x.size() * model_.memory != fit_.state.dim()) throw PreconditionError("tpca online: sample dimension mismatch");
  push(x);
}

std::optional<StepRecord> TpcaForecaster::step(const Vector& x) {
  if (x.size() * model_.memory != fit_.state.dim()) throw PreconditionError("tpca online: sample dimension mismatch");
  if (!x.allFinite()) throw InputError("tpca online: non-finite sample");
  const int tau = options_.horizon;

  if (static_cast<int>(history_.size()) >= model_.memory)
    pending_.push_back(PendingForecast{steps_ + static_cast<std::uint64_t>(tau) - 1,
                                       tpca_predict(model_, fit_, extended(0))});

  std::optional<StepRecord> record;
  if (!pending_.empty() && pending_.front().target_step == steps_) {
    StepRecord r;
    r.prediction = std::move(pending_.front().prediction);
    r.target = x;
    r.loss = mse_loss(r.prediction, r.target);
    pending_.pop_front();
    if (options_.update_params && options_.eta > 0.0) {
      MlpTrace trace;
      const Vector f = tpca_features(model_, fit_, extended(tau - 1));
      const Matrix out = mlp_forward(model_.readout, f.transpose(), model_.slope, &trace);
      const Matrix d = 2.0 * (out - r.target.transpose()) / static_cast<double>(out.size());
      NetworkParams params;
      params.readout = model_.readout;
      NetworkParams grad = params.zeros_like();
      mlp_backward(model_.readout, trace, d, model_.slope, *grad.readout);
      sgd_step_in_place(params, grad, options_.eta);
      model_.readout = *params.readout;
    }
    record = std::move(r);
  }

  push(x);
  if (options_.update_covariance && static_cast<int>(history_.size()) >= model_.memory) {
    update_in_place(fit_.state, extended(0));
    if (++since_refresh_ >= options_.refresh) {
      fit_.decomp = sym_eig(fit_.state.cov);
      since_refresh_ = 0;
    }
  }
  ++steps_;
  return record;
}

Matrix stack_lags(const SignalWindow& window) {
  if (window.length() < 1) throw PreconditionError("stack_lags: empty window");
  const Eigen::Index n = window.frames.front().rows();
  Matrix out(n, window.length());
  for (int lag = 0; lag < window.length(); ++lag) {
    const Matrix& f = window.frames[lag];
    if (f.cols() != 1 || f.rows() != n) throw PreconditionError("stack_lags: frames must be N x 1");
    out.col(lag) = f.col(0);
  }
  return out;
}

Matrix vnn_baseline_forward(const NetworkParams& params, const Matrix& cov, const SignalWindow& window) {
  if (params.receptive_field() != 1) throw PreconditionError("vnn_baseline_forward: layers must have T = 1");
  SignalWindow stacked;
  stacked.frames.push_back(stack_lags(window));
  return forward(params, cov, stacked).prediction;
}

}  // namespace stvnn
