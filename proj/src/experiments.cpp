#include "stvnn/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "stvnn/bounds.hpp"
#include "stvnn/online.hpp"
#include "stvnn/parallel.hpp"
#include "stvnn/series_io.hpp"
#include "stvnn/stream_stats.hpp"
#include "stvnn/tpca.hpp"
#include "stvnn/training.hpp"

namespace stvnn {

// ---------------------------------------------------------------- tables

void ResultTable::append(const ResultTable& other) { rows.insert(rows.end(), other.rows.begin(), other.rows.end()); }

std::string ResultTable::to_csv() const {
  std::string out = "experiment,model,dataset,trial,t_or_horizon,metric,value\n";
  for (const auto& r : rows) {
    out += r.experiment + "," + r.model + "," + r.dataset + "," + r.trial + "," + format_double(r.t_or_horizon) + "," +
           r.metric + "," + format_double(r.value) + "\n";
  }
  return out;
}

// ---------------------------------------------------------------- config

ModelSpec model_spec_from(const Config& c, ModelSpec m) {
  m.order = c.get_int("model.K", m.order);
  m.memory = c.get_int("model.T", m.memory);
  m.widths = c.get_ints("model.layers", m.widths);
  m.gamma = c.get_double("model.gamma", m.gamma);
  m.lr = c.get_double("model.lr", m.lr);
  if (c.has("model.eta_online")) m.eta_online = c.get_double("model.eta_online", 0.0);
  const std::string opt = c.get_string("model.optimizer", m.optimizer == OptimizerKind::Adam ? "adam" : "sgd");
  if (opt == "adam")
    m.optimizer = OptimizerKind::Adam;
  else if (opt == "sgd")
    m.optimizer = OptimizerKind::Sgd;
  else
    throw ConfigError("config: model.optimizer must be adam or sgd");
  m.epochs = c.get_int("model.epochs", m.epochs);
  m.batch = c.get_int("model.batch", m.batch);
  const std::string ro = c.get_string("model.readout", m.readout == ReadoutMode::PerNode ? "per_node" : "flattened");
  if (ro == "per_node")
    m.readout = ReadoutMode::PerNode;
  else if (ro == "flattened")
    m.readout = ReadoutMode::Flattened;
  else
    throw ConfigError("config: model.readout must be per_node or flattened");

  if (m.order < 0) throw ConfigError("config: model.K must be >= 0");
  if (m.memory < 1) throw ConfigError("config: model.T must be >= 1");
  if (m.widths.empty()) throw ConfigError("config: model.layers must list at least one width");
  for (int w : m.widths)
    if (w < 1) throw ConfigError("config: layer widths must be >= 1");
  if (m.gamma < 0.0 || m.gamma > 1.0) throw ConfigError("config: model.gamma must lie in [0, 1]");
  if (m.lr < 0.0 || m.online_rate() < 0.0) throw ConfigError("config: learning rates must be >= 0");
  if (m.epochs < 0 || m.batch < 1) throw ConfigError("config: model.epochs >= 0 and model.batch >= 1 required");
  return m;
}

TpcaSpec tpca_spec_from(const Config& c, TpcaSpec t) {
  t.memory = c.get_int("tpca.T", t.memory);
  t.components = c.get_int("tpca.components", t.components);
  t.refresh = c.get_int("tpca.refresh", t.refresh);
  t.center = c.get_bool("tpca.center", t.center);
  t.hidden = c.get_int("tpca.hidden", t.hidden);
  if (t.memory < 1 || t.components < 0 || t.refresh < 1 || t.hidden < 0)
    throw ConfigError("config: invalid tpca settings");
  return t;
}

std::vector<std::string> known_config_keys() {
  return {"experiment.seed", "experiment.trials", "data.kind", "data.path", "data.n", "data.samples", "data.tail",
          "data.tau", "data.seed", "split.train", "split.val", "split.test", "model.K", "model.T", "model.layers",
          "model.gamma", "model.lr", "model.eta_online", "model.optimizer", "model.epochs", "model.batch",
          "model.readout", "model.horizons", "tpca.T", "tpca.components", "tpca.refresh", "tpca.center",
          "tpca.hidden", "metrics.smape", "forecast.vnn", "forecast.tpca", "forecast.last_value", "shift.n",
          "shift.val_fraction", "shift.smoothing", "shift.log_smoothing", "shift.train_length", "shift.train_alpha",
          "shift.alphas", "shift.segment_length", "shift.init_tail", "stability.n", "stability.tails",
          "stability.T_sweep", "stability.tpca_T", "stability.max_t", "stability.log_points", "stability.burn_in",
          "stability.probes", "stability.tau", "stability.reference_samples", "stability.epochs", "stability.lr",
          "stability.epsilon", "stability.u"};
}

ForecastConfig forecast_config_from(const Config& c) {
  ForecastConfig f;
  f.model = model_spec_from(c, f.model);
  f.tpca = tpca_spec_from(c, f.tpca);
  f.split = {c.get_double("split.train", f.split[0]), c.get_double("split.val", f.split[1]),
             c.get_double("split.test", f.split[2])};
  if (std::abs(f.split[0] + f.split[1] + f.split[2] - 1.0) > 1e-9)
    throw ConfigError("config: split fractions must sum to 1");
  f.horizons = c.get_ints("model.horizons", f.horizons);
  for (int h : f.horizons)
    if (h < 1) throw ConfigError("config: horizons must be >= 1");
  f.trials = c.get_int("experiment.trials", f.trials);
  if (f.trials < 1) throw ConfigError("config: experiment.trials must be >= 1");
  f.seed = c.get_u64("experiment.seed", f.seed);
  const std::string sm = c.get_string("metrics.smape", "symmetric");
  if (sm == "symmetric")
    f.smape = SmapeVariant::Symmetric;
  else if (sm == "halved")
    f.smape = SmapeVariant::Halved;
  else
    throw ConfigError("config: metrics.smape must be symmetric or halved");
  f.run_vnn = c.get_bool("forecast.vnn", f.run_vnn);
  f.run_tpca = c.get_bool("forecast.tpca", f.run_tpca);
  f.run_last_value = c.get_bool("forecast.last_value", f.run_last_value);
  return f;
}

ShiftConfig shift_config_from(const Config& c) {
  ShiftConfig s;
  s.model = model_spec_from(c, s.model);
  s.tpca = tpca_spec_from(c, s.tpca);
  s.n = c.get_int("shift.n", s.n);
  s.val_fraction = c.get_double("shift.val_fraction", s.val_fraction);
  s.smoothing = c.get_int("shift.smoothing", s.smoothing);
  s.log_smoothing = c.get_int("shift.log_smoothing", s.log_smoothing);
  s.trials = c.get_int("experiment.trials", s.trials);
  s.seed = c.get_u64("experiment.seed", s.seed);
  s.schedule.train_length = c.get_int("shift.train_length", s.schedule.train_length);
  s.schedule.train_alpha = c.get_double("shift.train_alpha", s.schedule.train_alpha);
  s.schedule.init_tail = c.get_double("shift.init_tail", s.schedule.init_tail);
  if (c.has("shift.alphas") || c.has("shift.segment_length")) {
    std::vector<double> alphas;
    for (const auto& seg : s.schedule.segments) alphas.push_back(seg.alpha);
    alphas = c.get_doubles("shift.alphas", alphas);
    const int len = c.get_int("shift.segment_length", s.schedule.segments.front().length);
    s.schedule.segments.clear();
    for (double a : alphas) s.schedule.segments.push_back({len, a});
  }
  if (s.n < 1 || s.trials < 1 || s.smoothing < 1 || s.log_smoothing < 1)
    throw ConfigError("config: invalid shift settings");
  if (s.val_fraction <= 0.0 || s.val_fraction >= 1.0) throw ConfigError("config: shift.val_fraction must lie in (0, 1)");
  return s;
}

StabilityConfig stability_config_from(const Config& c) {
  StabilityConfig s;
  s.model = model_spec_from(c, s.model);
  s.n = c.get_int("stability.n", s.n);
  s.tails = c.get_doubles("stability.tails", s.tails);
  s.memories = c.get_ints("stability.T_sweep", s.memories);
  s.tpca_memory = c.get_int("stability.tpca_T", s.tpca_memory);
  s.trials = c.get_int("experiment.trials", s.trials);
  s.max_t = c.get_int("stability.max_t", s.max_t);
  s.log_points = c.get_int("stability.log_points", s.log_points);
  s.burn_in = c.get_int("stability.burn_in", s.burn_in);
  s.probes = c.get_int("stability.probes", s.probes);
  s.tau = c.get_int("stability.tau", s.tau);
  s.reference_samples = c.get_int("stability.reference_samples", s.reference_samples);
  s.model.epochs = c.get_int("stability.epochs", s.model.epochs);
  s.model.lr = c.get_double("stability.lr", s.model.lr);
  s.epsilon = c.get_double("stability.epsilon", s.epsilon);
  s.u = c.get_double("stability.u", s.u);
  s.seed = c.get_u64("experiment.seed", s.seed);
  if (s.n < 2 || s.tails.empty() || s.memories.empty() || s.trials < 1 || s.log_points < 2 || s.probes < 1 ||
      s.tau < 0 || s.tpca_memory < 1 || s.reference_samples < 2)
    throw ConfigError("config: invalid stability settings");
  for (double t : s.tails)
    if (t < 0.0 || t > 1.0) throw ConfigError("config: stability tails must lie in [0, 1]");
  for (int t : s.memories)
    if (t < 1) throw ConfigError("config: stability T values must be >= 1");
  return s;
}

// ---------------------------------------------------------------- shared helpers

namespace {

Architecture make_arch(const ModelSpec& m, int input_width, int memory, int nodes) {
  Architecture a;
  a.order = m.order;
  a.memory = memory;
  a.input_width = input_width;
  a.widths = m.widths;
  a.readout_mode = m.readout;
  a.nodes = nodes;
  return a;
}

NetworkParams init_from_seed(const Architecture& arch, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return init_network(arch, rng);
}

TrainConfig train_config(const ModelSpec& m, std::uint64_t seed) {
  TrainConfig t;
  t.epochs = m.epochs;
  t.batch = m.batch;
  t.lr = m.lr;
  t.optimizer = m.optimizer;
  t.seed = seed;
  return t;
}

std::string trial_label(int i) { return std::to_string(i); }

void require_range(PositionRange r, const std::string& what) {
  if (r.size() == 0) throw InputError("dataset too short: no " + what + " forecast origins");
}

Series batch_rows(const Series& z, int begin, int end) { return z.middleRows(begin, end - begin); }

Series extended_rows(const Series& z, int begin, int end, int memory) {
  begin = std::max(begin, memory - 1);
  Series out(std::max(0, end - begin), z.cols() * memory);
  for (int r = begin; r < end; ++r) out.row(r - begin) = extended_sample_at(z, r, memory).transpose();
  return out;
}

}  // namespace

// ---------------------------------------------------------------- forecasting

namespace {

struct TrialForecast {
  std::map<std::pair<std::string, int>, MetricsRecord> metrics;
  std::map<std::pair<std::string, int>, double> val;
};

// Streams rows [start, rows) through `model` after priming with [0, start);
// returns de-standardized forecasts and raw targets for target rows >= score_from.
std::pair<Matrix, Matrix> stream_and_collect(StreamingForecaster& model, const Series& z, const Series& raw,
                                             const Standardizer& st, int start, int score_from) {
  for (int r = 0; r < start; ++r) model.prime(z.row(r).transpose());
  const int rows = static_cast<int>(z.rows());
  Matrix preds(rows - score_from, z.cols());
  Matrix targets(rows - score_from, z.cols());
  int filled = 0;
  for (int r = start; r < rows; ++r) {
    auto rec = model.step(z.row(r).transpose());
    if (r < score_from) continue;
    if (!rec) throw InputError("dataset too short: no forecast available for a scored row");
    preds.row(filled) = st.invert(Vector(rec->prediction.col(0))).transpose();
    targets.row(filled) = raw.row(r);
    ++filled;
  }
  return {preds.topRows(filled), targets.topRows(filled)};
}

}  // namespace

ForecastOutput run_forecast(const Series& series, const ForecastConfig& cfg, const std::string& dataset) {
  if (!series.allFinite()) throw InputError("forecast: non-finite data");
  const int rows = static_cast<int>(series.rows());
  const int n = static_cast<int>(series.cols());
  const SplitSizes sp = chronological_split(rows, cfg.split);
  if (sp.train < 2 || sp.val < 1 || sp.test < 1) throw InputError("dataset too short for the requested split");
  const Standardizer st = Standardizer::fit(series.topRows(sp.train));
  const Series z = st.apply(series);
  const UpdateMode mode = Nonstationary{cfg.model.gamma};
  const CovarianceState cov0 = init_from_batch(batch_rows(z, 0, sp.train), mode);
  const Matrix shift0 = trace_normalize(cov0.cov);
  const int val_end = sp.train + sp.val;
  const int tpca_r = cfg.tpca.components > 0 ? cfg.tpca.components : n;
  const int tpca_hidden = cfg.tpca.hidden > 0 ? cfg.tpca.hidden : cfg.model.widths.back();

  std::vector<TrialForecast> trials(cfg.trials);
  parallel_for(cfg.trials, [&](int trial) {
    const std::uint64_t tseed = derive_seed(cfg.seed, static_cast<std::uint64_t>(trial));
    TrialForecast& out = trials[trial];
    for (int tau : cfg.horizons) {
      OnlineOptions opts;
      opts.eta = cfg.model.online_rate();
      opts.horizon = tau;

      {  // STVNN
        const NetworkParams init = init_from_seed(make_arch(cfg.model, 1, cfg.model.memory, n), derive_seed(tseed, 1));
        const ForecastTask task = make_task(z, tau, 1);
        const int field = init.receptive_field();
        const PositionRange tr = origins_for_rows(0, sp.train, tau, field);
        const PositionRange va = origins_for_rows(sp.train, val_end, tau, field);
        require_range(tr, "training");
        require_range(va, "validation");
        const TrainReport rep = train_offline(init, shift0, task, tr, va, train_config(cfg.model, derive_seed(tseed, 2)));
        NetworkForecaster f(rep.params, cov0, opts);
        auto [p, y] = stream_and_collect(f, z, series, st, sp.train, val_end);
        out.metrics[{"STVNN", tau}] = compute_metrics(p, y, cfg.smape);
        out.val[{"STVNN", tau}] = rep.best_val;
      }
      if (cfg.run_vnn) {
        const int lags = cfg.model.memory;
        const NetworkParams init = init_from_seed(make_arch(cfg.model, lags, 1, n), derive_seed(tseed, 3));
        const ForecastTask task = make_task(z, tau, lags);
        const PositionRange tr = origins_for_rows(0, sp.train, tau, lags);
        const PositionRange va = origins_for_rows(sp.train, val_end, tau, lags);
        require_range(tr, "training");
        require_range(va, "validation");
        const TrainReport rep = train_offline(init, shift0, task, tr, va, train_config(cfg.model, derive_seed(tseed, 4)));
        OnlineOptions vopts = opts;
        vopts.lag_features = lags;
        NetworkForecaster f(rep.params, cov0, vopts);
        auto [p, y] = stream_and_collect(f, z, series, st, sp.train, val_end);
        out.metrics[{"VNN", tau}] = compute_metrics(p, y, cfg.smape);
        out.val[{"VNN", tau}] = rep.best_val;
      }
      if (cfg.run_tpca) {
        const int T = cfg.tpca.memory;
        const TpcaFit fit = tpca_fit(extended_rows(z, 0, sp.train, T), mode);
        std::mt19937_64 rng(derive_seed(tseed, 5));
        const TpcaModel init = init_tpca(n, T, tpca_r, tpca_hidden, rng, cfg.tpca.center);
        const ForecastTask task = make_task(z, tau, 1);
        const PositionRange tr = origins_for_rows(0, sp.train, tau, T);
        const PositionRange va = origins_for_rows(sp.train, val_end, tau, T);
        require_range(tr, "training");
        require_range(va, "validation");
        const TpcaTrainReport rep = train_tpca(init, fit, z, task, tr, va, train_config(cfg.model, derive_seed(tseed, 6)));
        TpcaOnlineOptions topts;
        topts.eta = cfg.model.online_rate();
        topts.horizon = tau;
        topts.refresh = cfg.tpca.refresh;
        TpcaForecaster f(rep.model, fit, topts);
        auto [p, y] = stream_and_collect(f, z, series, st, sp.train, val_end);
        out.metrics[{"TPCA", tau}] = compute_metrics(p, y, cfg.smape);
        out.val[{"TPCA", tau}] = rep.best_val;
      }
      if (cfg.run_last_value) {
        LastValueForecaster f(tau);
        auto [p, y] = stream_and_collect(f, z, series, st, sp.train, val_end);
        out.metrics[{"LastValue", tau}] = compute_metrics(p, y, cfg.smape);
      }
    }
  });

  ForecastOutput out;
  for (int trial = 0; trial < cfg.trials; ++trial) {
    for (const auto& [key, m] : trials[trial].metrics) out.metrics[key].push_back(m);
    for (const auto& [key, v] : trials[trial].val) out.val_loss[key].push_back(v);
  }
  for (const auto& [key, recs] : out.metrics) {
    const auto& [model, tau] = key;
    std::vector<double> mse, mae, smape;
    for (int trial = 0; trial < static_cast<int>(recs.size()); ++trial) {
      const auto& r = recs[trial];
      mse.push_back(r.mse);
      mae.push_back(r.mae);
      smape.push_back(r.smape);
      for (auto [name, v] : {std::pair<const char*, double>{"mse", r.mse}, {"mae", r.mae}, {"smape", r.smape}})
        out.table.add({"forecast", model, dataset, trial_label(trial), static_cast<double>(tau), name, v});
      if (out.val_loss.count(key))
        out.table.add({"forecast", model, dataset, trial_label(trial), static_cast<double>(tau), "val_loss",
                       out.val_loss[key][trial]});
    }
    for (auto [name, vals] : {std::pair<const char*, std::vector<double>*>{"mse", &mse}, {"mae", &mae},
                              {"smape", &smape}}) {
      const Aggregate a = aggregate(*vals);
      out.table.add({"forecast", model, dataset, "mean", static_cast<double>(tau), name, a.mean});
      out.table.add({"forecast", model, dataset, "std", static_cast<double>(tau), name, a.std});
    }
  }
  return out;
}

// ---------------------------------------------------------------- distribution shift

std::string shift_model_name(ShiftModel m) {
  switch (m) {
    case ShiftModel::Stvnn: return "STVNN";
    case ShiftModel::Stvf: return "STVF";
    case ShiftModel::Tpca: return "TPCA";
    case ShiftModel::FrozenParams: return "STVNN_frozen_params";
    case ShiftModel::FixedCovariance: return "STVNN_fixed_cov";
  }
  return "?";
}

std::vector<double> moving_average(const std::vector<double>& x, int window) {
  require(window >= 1, "moving_average: window must be >= 1");
  const int n = static_cast<int>(x.size());
  std::vector<double> prefix(n + 1, 0.0);
  for (int i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + x[i];
  const int left = (window - 1) / 2, right = window / 2;
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) {
    const int a = std::max(0, i - left), b = std::min(n, i + right + 1);
    out[i] = (prefix[b] - prefix[a]) / (b - a);
  }
  return out;
}

int local_argmax(const std::vector<double>& x, int c, int radius) {
  const int a = std::max(0, c - radius), b = std::min(static_cast<int>(x.size()) - 1, c + radius);
  require(a <= b, "local_argmax: empty window");
  int best = a;
  for (int i = a + 1; i <= b; ++i)
    if (x[i] > x[best]) best = i;
  return best;
}

double window_mean(const std::vector<double>& x, int begin, int length) {
  const int a = std::max(0, begin), b = std::min(static_cast<int>(x.size()), begin + length);
  require(a < b, "window_mean: empty window");
  return std::accumulate(x.begin() + a, x.begin() + b, 0.0) / (b - a);
}

std::vector<double> ShiftOutput::mean_loss(const std::string& model) const {
  const auto& per = losses.at(model);
  std::vector<double> m(stream_length, 0.0);
  for (const auto& trial : per)
    for (int i = 0; i < stream_length; ++i) m[i] += trial[i] / per.size();
  return m;
}

ShiftOutput run_shift_models(const ShiftConfig& cfg, const std::vector<ShiftModel>& models,
                             const std::string& experiment) {
  const int train_len = cfg.schedule.train_length;
  const int n_val = static_cast<int>(std::lround(cfg.val_fraction * train_len));
  const int n_fit = train_len - n_val;
  if (n_fit < 2 || n_val < 1) throw InputError("shift: training block too short");
  const int total = train_len + cfg.schedule.test_length();
  const int stream_len = total - n_fit;
  const int tpca_r = cfg.tpca.components > 0 ? cfg.tpca.components : cfg.n;
  const int tpca_hidden = cfg.tpca.hidden > 0 ? cfg.tpca.hidden : cfg.model.widths.back();
  const UpdateMode mode = Nonstationary{cfg.model.gamma};

  // trial -> model index -> losses
  std::vector<std::vector<std::vector<double>>> results(cfg.trials);
  parallel_for(cfg.trials, [&](int trial) {
    const std::uint64_t tseed = derive_seed(cfg.seed, static_cast<std::uint64_t>(trial));
    const ShiftData data = gen_nonstationary(cfg.schedule, cfg.n, derive_seed(tseed, 0));
    Series full(total, cfg.n);
    full.topRows(train_len) = data.train;
    full.bottomRows(cfg.schedule.test_length()) = data.test;
    const Standardizer st = Standardizer::fit(full.topRows(n_fit));
    const Series z = st.apply(full);
    const CovarianceState cov0 = init_from_batch(batch_rows(z, 0, n_fit), mode);
    const Matrix shift0 = trace_normalize(cov0.cov);

    std::optional<NetworkParams> trained;  // shared by the full and frozen variants
    auto train_network = [&](const Architecture& arch, const Matrix& shift, std::uint64_t salt) {
      const NetworkParams init = init_from_seed(arch, derive_seed(tseed, salt));
      const ForecastTask task = make_task(z, 1, 1);
      const int field = init.receptive_field();
      const PositionRange tr = origins_for_rows(0, n_fit, 1, field);
      const PositionRange va = origins_for_rows(n_fit, train_len, 1, field);
      require_range(tr, "training");
      return train_offline(init, shift, task, tr, va, train_config(cfg.model, derive_seed(tseed, salt + 100))).params;
    };
    auto stvnn_params = [&]() -> const NetworkParams& {
      if (!trained) trained = train_network(make_arch(cfg.model, 1, cfg.model.memory, cfg.n), shift0, 1);
      return *trained;
    };
    auto run_stream = [&](StreamingForecaster& f) {
      for (int r = 0; r < n_fit; ++r) f.prime(z.row(r).transpose());
      std::vector<double> loss(stream_len, std::numeric_limits<double>::quiet_NaN());
      for (int r = n_fit; r < total; ++r) {
        auto rec = f.step(z.row(r).transpose());
        if (rec) loss[r - n_fit] = rec->loss;
      }
      return loss;
    };

    OnlineOptions opts;
    opts.eta = cfg.model.online_rate();
    for (ShiftModel m : models) {
      std::vector<double> loss;
      switch (m) {
        case ShiftModel::Stvnn: {
          NetworkForecaster f(stvnn_params(), cov0, opts);
          loss = run_stream(f);
          break;
        }
        case ShiftModel::FrozenParams: {
          OnlineOptions o = opts;
          o.update_params = false;
          NetworkForecaster f(stvnn_params(), cov0, o);
          loss = run_stream(f);
          break;
        }
        case ShiftModel::FixedCovariance: {
          // covariance of the complete stream, held fixed throughout
          OnlineOptions o = opts;
          o.fixed_covariance = trace_normalize(init_from_batch(z).cov);
          NetworkForecaster f(stvnn_params(), cov0, o);
          loss = run_stream(f);
          break;
        }
        case ShiftModel::Stvf: {
          Architecture a = make_arch(cfg.model, 1, cfg.model.memory, cfg.n);
          a.widths = {1};
          a.nonlinear = false;
          a.readout = false;
          const NetworkParams p = train_network(a, shift0, 5);
          NetworkForecaster f(p, cov0, opts);
          loss = run_stream(f);
          break;
        }
        case ShiftModel::Tpca: {
          const int T = cfg.tpca.memory;
          const TpcaFit fit = tpca_fit(extended_rows(z, 0, n_fit, T), mode);
          std::mt19937_64 rng(derive_seed(tseed, 7));
          const TpcaModel init = init_tpca(cfg.n, T, tpca_r, tpca_hidden, rng, cfg.tpca.center);
          const ForecastTask task = make_task(z, 1, 1);
          const PositionRange tr = origins_for_rows(0, n_fit, 1, T);
          const PositionRange va = origins_for_rows(n_fit, train_len, 1, T);
          const TpcaTrainReport rep = train_tpca(init, fit, z, task, tr, va, train_config(cfg.model, derive_seed(tseed, 8)));
          TpcaOnlineOptions o;
          o.eta = cfg.model.online_rate();
          o.refresh = cfg.tpca.refresh;
          TpcaForecaster f(rep.model, fit, o);
          loss = run_stream(f);
          break;
        }
      }
      results[trial].push_back(std::move(loss));
    }
  });

  ShiftOutput out;
  out.stream_length = stream_len;
  int offset = 0;
  for (const auto& seg : cfg.schedule.segments) {
    out.change_points.push_back(n_val + offset);
    offset += seg.length;
  }
  for (std::size_t mi = 0; mi < models.size(); ++mi) {
    const std::string name = shift_model_name(models[mi]);
    for (int trial = 0; trial < cfg.trials; ++trial) out.losses[name].push_back(results[trial][mi]);
  }

  const std::string dataset = "synthetic_shift";
  for (ShiftModel m : models) {
    const std::string name = shift_model_name(m);
    const std::vector<double> mean = out.mean_loss(name);
    const std::vector<double> smooth = moving_average(mean, cfg.log_smoothing);
    for (int i = 0; i < stream_len; ++i) {
      out.table.add({experiment, name, dataset, "mean", static_cast<double>(i), "loss", mean[i]});
      out.table.add({experiment, name, dataset, "mean", static_cast<double>(i), "loss_smooth", smooth[i]});
    }
    const std::vector<double> spike = moving_average(mean, cfg.smoothing);
    for (std::size_t k = 0; k < out.change_points.size(); ++k) {
      const int c = out.change_points[k];
      out.table.add({experiment, name, dataset, "mean", static_cast<double>(c), "spike_offset",
                     static_cast<double>(local_argmax(spike, c, 100) - c)});
      for (int trial = 0; trial < cfg.trials; ++trial) {
        const auto& l = out.losses[name][trial];
        out.table.add({experiment, name, dataset, trial_label(trial), static_cast<double>(c), "post_change_500",
                       window_mean(l, c, 500)});
        out.table.add({experiment, name, dataset, trial_label(trial), static_cast<double>(c), "post_change_200",
                       window_mean(l, c, 200)});
      }
      out.table.add({experiment, name, dataset, "mean", static_cast<double>(c), "post_change_500",
                     window_mean(mean, c, 500)});
      out.table.add({experiment, name, dataset, "mean", static_cast<double>(c), "post_change_200",
                     window_mean(mean, c, 200)});
    }
  }
  return out;
}

ShiftOutput run_shift(const ShiftConfig& config) {
  return run_shift_models(config, {ShiftModel::Stvnn, ShiftModel::Stvf, ShiftModel::Tpca}, "shift");
}

ShiftOutput run_ablation(const ShiftConfig& config) {
  return run_shift_models(config, {ShiftModel::Stvnn, ShiftModel::FrozenParams, ShiftModel::FixedCovariance},
                          "ablation");
}

// ---------------------------------------------------------------- stability

std::vector<int> geometric_grid(int lo, int hi, int points) {
  require(lo >= 1 && hi >= lo && points >= 2, "geometric_grid: invalid range");
  std::vector<int> g;
  const double ratio = std::log(static_cast<double>(hi) / lo) / (points - 1);
  for (int i = 0; i < points; ++i) {
    const int v = static_cast<int>(std::lround(lo * std::exp(ratio * i)));
    if (g.empty() || v > g.back()) g.push_back(v);
  }
  g.back() = hi;
  return g;
}

double loglog_slope(const std::vector<int>& x, const std::vector<double>& y) {
  require(x.size() == y.size() && x.size() >= 2, "loglog_slope: need matching series of length >= 2");
  double mx = 0.0, my = 0.0;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(y[i] > 0.0)) throw InputError("loglog_slope: values must be positive");
    mx += std::log(static_cast<double>(x[i])) / n;
    my += std::log(y[i]) / n;
  }
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(static_cast<double>(x[i])) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

std::vector<double> StabilityCurve::mean() const {
  std::vector<double> m(per_trial.front().size(), 0.0);
  for (const auto& t : per_trial)
    for (std::size_t i = 0; i < m.size(); ++i) m[i] += t[i] / per_trial.size();
  return m;
}

std::vector<double> StabilityCurve::median() const {
  std::vector<double> m(per_trial.front().size());
  for (std::size_t i = 0; i < m.size(); ++i) {
    std::vector<double> v;
    for (const auto& t : per_trial) v.push_back(t[i]);
    std::sort(v.begin(), v.end());
    const std::size_t k = v.size();
    m[i] = k % 2 ? v[k / 2] : 0.5 * (v[k / 2 - 1] + v[k / 2]);
  }
  return m;
}

const StabilityCurve& StabilityOutput::curve(const std::string& model, int memory, double tail) const {
  for (const auto& c : curves)
    if (c.model == model && c.memory == memory && c.tail == tail) return c;
  throw PreconditionError("stability: no curve for " + model);
}

std::string StabilityOutput::curves_csv() const {
  std::string out = "t,model,T,tail,gap\n";
  for (const auto& c : curves) {
    const std::vector<double> m = c.mean();
    for (std::size_t i = 0; i < grid.size(); ++i)
      out += std::to_string(grid[i]) + "," + c.model + "," + std::to_string(c.memory) + "," + format_double(c.tail) +
             "," + format_double(m[i]) + "\n";
  }
  return out;
}

namespace {

// Taps drawn lag by lag from per-(layer, lag) streams, so a longer memory
// extends a shorter one with the same leading lags.
NetworkParams nested_init(const Architecture& arch, std::uint64_t seed) {
  NetworkParams p = init_from_seed(arch, derive_seed(seed, 0));
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    FilterBank& bank = p.layers[l];
    const double bound = 1.0 / std::sqrt(static_cast<double>((bank.order() + 1) * bank.in_width()));
    for (int lag = 0; lag < bank.memory(); ++lag) {
      std::mt19937_64 rng(derive_seed(seed, 1000 + 64 * l + lag));
      std::uniform_real_distribution<double> dist(-bound, bound);
      Matrix& tap = bank.tap(lag);
      for (Eigen::Index j = 0; j < tap.cols(); ++j)
        for (Eigen::Index i = 0; i < tap.rows(); ++i) tap(i, j) = dist(rng);
    }
  }
  return p;
}

Matrix extended_true_covariance(const Matrix& c, int tau, int memory) {
  const Eigen::Index n = c.rows();
  Matrix out(n * memory, n * memory);
  for (int i = 0; i < memory; ++i)
    for (int j = 0; j < memory; ++j) out.block(i * n, j * n, n, n) = ma_autocovariance(c, tau, std::abs(i - j));
  return out;
}

SignalWindow window_at(const Series& x, int row, int length) {
  SignalWindow w;
  for (int lag = 0; lag < length; ++lag) w.frames.push_back(x.row(row - lag).transpose());
  return w;
}

double max_lipschitz(const NetworkParams& p, double lo, double hi) {
  double best = 0.0;
  for (const auto& bank : p.layers) best = std::max(best, estimate_lipschitz(bank, lo, hi));
  return best;
}

struct StabilityTrial {
  std::vector<std::vector<double>> stvnn;  // memory index -> gap per grid point
  std::vector<double> tpca;
  ResultTable bounds;
};

}  // namespace

StabilityOutput run_stability(const StabilityConfig& cfg) {
  const int burn = cfg.burn_in > 0 ? cfg.burn_in : 2 * cfg.n;
  require(cfg.max_t > burn, "stability: max_t must exceed the burn-in");
  StabilityOutput out;
  out.grid = geometric_grid(burn, cfg.max_t, cfg.log_points);
  const int n_tails = static_cast<int>(cfg.tails.size());
  const int n_mem = static_cast<int>(cfg.memories.size());
  int max_field = cfg.tpca_memory;
  std::vector<Architecture> archs;
  for (int T : cfg.memories) {
    Architecture a = make_arch(cfg.model, 1, T, cfg.n);
    archs.push_back(a);
    max_field = std::max(max_field, static_cast<int>(a.widths.size()) * (T - 1) + 1);
  }

  std::vector<StabilityTrial> results(n_tails * cfg.trials);
  parallel_for(n_tails * cfg.trials, [&](int job) {
    const int ti = job / cfg.trials, trial = job % cfg.trials;
    const double tail = cfg.tails[ti];
    const std::uint64_t tseed = derive_seed(cfg.seed, static_cast<std::uint64_t>(trial));
    StabilityTrial& res = results[job];

    const Matrix c = make_covariance(TailProfile{cfg.n, tail, 0, derive_seed(tseed, 1)});
    const Series stream = gen_stationary(c, cfg.max_t, cfg.tau, derive_seed(tseed, 2 + 17 * ti));
    const Series probe_data = gen_stationary(c, cfg.probes * max_field, cfg.tau, derive_seed(tseed, 3 + 17 * ti));
    const Matrix lag0 = ma_autocovariance(c, cfg.tau, 0);
    const Matrix c_true = trace_normalize(lag0);
    const SpectralDecomposition ext_true = sym_eig(extended_true_covariance(c, cfg.tau, cfg.tpca_memory));

    // reference parameters: fitted with the true covariance
    std::vector<NetworkParams> reference;
    const Series ref_rows = stream.topRows(std::min(cfg.reference_samples, cfg.max_t));
    const ForecastTask task = make_task(ref_rows, 1, 1);
    for (int mi = 0; mi < n_mem; ++mi) {
      const NetworkParams init = nested_init(archs[mi], derive_seed(tseed, 4));
      const PositionRange tr = origins_for_rows(0, static_cast<int>(ref_rows.rows()), 1, init.receptive_field());
      require_range(tr, "reference");
      reference.push_back(train_offline(init, c_true, task, tr, PositionRange{}, train_config(cfg.model, derive_seed(tseed, 5)))
                              .params);
    }

    std::vector<std::vector<SignalWindow>> windows(n_mem);
    std::vector<std::vector<Matrix>> true_embeddings(n_mem);
    for (int mi = 0; mi < n_mem; ++mi) {
      const int field = reference[mi].receptive_field();
      for (int p = 0; p < cfg.probes; ++p) {
        windows[mi].push_back(window_at(probe_data, (p + 1) * max_field - 1, field));
        true_embeddings[mi].push_back(forward(reference[mi], c_true, windows[mi].back()).embedding);
      }
    }
    std::vector<Vector> probe_ext;
    for (int p = 0; p < cfg.probes; ++p)
      probe_ext.push_back(extended_sample_at(probe_data, (p + 1) * max_field - 1, cfg.tpca_memory));

    res.stvnn.assign(n_mem, {});
    CovarianceState state = init_from_sample(stream.row(0).transpose());
    std::optional<CovarianceState> ext;
    if (cfg.tpca_memory == 1) ext = init_from_sample(stream.row(0).transpose());
    std::size_t next = 0;

    // bound ingredients, first trial only
    const bool with_bounds = trial == 0;
    Vector k_raw, k_norm, k_ext;
    double g_raw = 1.0;
    SpectralDecomposition true_decomp;
    if (with_bounds) {
      true_decomp = sym_eig(lag0);
      const int m = std::min(cfg.max_t, 5000);
      Series centered = stream.topRows(m);
      centered.rowwise() -= centered.colwise().mean();
      k_raw = kurtosis_terms(centered, true_decomp);
      const double scale = 1.0 / std::sqrt(lag0.trace());
      const SpectralDecomposition norm_decomp = sym_eig(c_true);
      k_norm = kurtosis_terms(Series(centered * scale), norm_decomp);
      g_raw = estimate_g(centered);
      Series ext_rows = extended_rows(stream, 0, m, cfg.tpca_memory);
      ext_rows.rowwise() -= ext_rows.colwise().mean();
      k_ext = kurtosis_terms(ext_rows, ext_true);
    }

    for (int t = 1; t <= cfg.max_t && next < out.grid.size(); ++t) {
      // t samples seen after this block
      if (t > 1) update_in_place(state, stream.row(t - 1).transpose());
      if (t >= cfg.tpca_memory) {
        const Vector xe = extended_sample_at(stream, t - 1, cfg.tpca_memory);
        if (!ext)
          ext = init_from_sample(xe);
        else if (t > cfg.tpca_memory || cfg.tpca_memory == 1)
          update_in_place(*ext, xe);
      }
      if (t != out.grid[next]) continue;

      const Matrix c_hat = trace_normalize(state.cov);
      for (int mi = 0; mi < n_mem; ++mi) {
        double gap = 0.0;
        for (int p = 0; p < cfg.probes; ++p)
          gap += (forward(reference[mi], c_hat, windows[mi][p]).embedding - true_embeddings[mi][p]).norm();
        res.stvnn[mi].push_back(gap / cfg.probes);
      }
      const SpectralDecomposition est = sym_eig(ext->cov);
      double pgap = 0.0;
      for (const auto& x : probe_ext) pgap += projection_gap(est, ext_true, x);
      res.tpca.push_back(pgap / cfg.probes);

      if (with_bounds) {
        const std::string ds = "synthetic_tail" + format_double(tail);
        const double lo = c_true.eigenvalues().real().minCoeff(), hi = c_true.eigenvalues().real().maxCoeff();
        for (int mi = 0; mi < n_mem; ++mi) {
          const std::string model = "STVNN_T" + std::to_string(cfg.memories[mi]);
          BoundInputs in;
          in.t = t;
          in.n = cfg.n;
          in.memory = cfg.memories[mi];
          in.lipschitz = max_lipschitz(reference[mi], lo, hi);
          in.g = g_raw;
          in.eta = cfg.model.online_rate() > 0 ? cfg.model.online_rate() : 1e-3;
          in.h_star_norm = parameter_norm(reference[mi]);
          in.epsilon = cfg.epsilon;
          in.u = cfg.u;
          in.k_max = k_raw.maxCoeff();
          in.cov_norm = true_decomp.eigenvalues(0);
          const FilterBound raw = filter_bound(in);
          in.k_max = k_norm.maxCoeff();
          in.cov_norm = true_decomp.eigenvalues(0) / lag0.trace();
          const FilterBound nb = filter_bound(in);
          int width = 0;
          for (int w : cfg.model.widths) width = std::max(width, w);
          const int layers = static_cast<int>(cfg.model.widths.size());
          res.bounds.add({"stability", model, ds, "0", static_cast<double>(t), "bound_filter_cov_raw", raw.covariance_term});
          res.bounds.add({"stability", model, ds, "0", static_cast<double>(t), "bound_filter_cov_normalized",
                          nb.covariance_term});
          res.bounds.add({"stability", model, ds, "0", static_cast<double>(t), "bound_suboptimality",
                          nb.suboptimality_term});
          res.bounds.add({"stability", model, ds, "0", static_cast<double>(t), "bound_network",
                          network_bound(nb.covariance_term, layers, width)});
          res.bounds.add({"stability", model, ds, "0", static_cast<double>(t), "bound_vnn",
                          vnn_bound(nb.covariance_term, layers, width, cfg.memories[mi])});
        }
        double pb = std::numeric_limits<double>::infinity();
        try {
          pb = pca_bound(t, ext_true.eigenvalues, k_ext, cfg.epsilon);
        } catch (const DivergentBoundError&) {
        }
        res.bounds.add({"stability", "TPCA_T" + std::to_string(cfg.tpca_memory), ds, "0", static_cast<double>(t),
                        "bound_pca", pb});
      }
      ++next;
    }
  });

  for (int ti = 0; ti < n_tails; ++ti) {
    const double tail = cfg.tails[ti];
    const std::string ds = "synthetic_tail" + format_double(tail);
    for (int mi = 0; mi < n_mem; ++mi) {
      StabilityCurve curve{"STVNN", cfg.memories[mi], tail, {}};
      for (int trial = 0; trial < cfg.trials; ++trial) curve.per_trial.push_back(results[ti * cfg.trials + trial].stvnn[mi]);
      out.curves.push_back(std::move(curve));
    }
    StabilityCurve tcurve{"TPCA", cfg.tpca_memory, tail, {}};
    for (int trial = 0; trial < cfg.trials; ++trial) tcurve.per_trial.push_back(results[ti * cfg.trials + trial].tpca);
    out.curves.push_back(std::move(tcurve));
    out.table.append(results[ti * cfg.trials].bounds);
  }
  for (const auto& c : out.curves) {
    const std::string model = c.model + "_T" + std::to_string(c.memory);
    const std::string ds = "synthetic_tail" + format_double(c.tail);
    for (int trial = 0; trial < static_cast<int>(c.per_trial.size()); ++trial)
      for (std::size_t i = 0; i < out.grid.size(); ++i)
        out.table.add({"stability", model, ds, trial_label(trial), static_cast<double>(out.grid[i]), "gap",
                       c.per_trial[trial][i]});
    const std::vector<double> m = c.mean();
    for (std::size_t i = 0; i < out.grid.size(); ++i)
      out.table.add({"stability", model, ds, "mean", static_cast<double>(out.grid[i]), "gap", m[i]});
  }
  return out;
}

// ---------------------------------------------------------------- grid search

GridOutput grid_search(const Series& series, const Config& base,
                       const std::map<std::string, std::vector<std::string>>& grids, const std::string& dataset) {
  if (grids.empty()) throw ConfigError("grid_search: empty grid");
  for (const auto& [k, v] : grids)
    if (v.empty()) throw ConfigError("grid_search: grid for '" + k + "' has no values");

  const ForecastConfig fc = forecast_config_from(base);
  const int rows = static_cast<int>(series.rows());
  const SplitSizes sp = chronological_split(rows, fc.split);
  if (sp.train < 2 || sp.val < 1) throw InputError("grid_search: dataset too short");
  // Only rows that precede the test split are visible from here on.
  const Series visible = series.topRows(sp.train + sp.val);
  if (!visible.allFinite()) throw InputError("grid_search: non-finite data");
  const Standardizer st = Standardizer::fit(visible.topRows(sp.train));
  const Series z = st.apply(visible);
  const int n = static_cast<int>(series.cols());

  std::vector<std::map<std::string, std::string>> assignments(1);
  for (const auto& [key, values] : grids) {
    std::vector<std::map<std::string, std::string>> next;
    for (const auto& a : assignments)
      for (const auto& v : values) {
        auto b = a;
        b[key] = v;
        next.push_back(std::move(b));
      }
    assignments = std::move(next);
  }

  GridOutput out;
  out.points.resize(assignments.size());
  parallel_for(static_cast<int>(assignments.size()), [&](int i) {
    Config c = base;
    for (const auto& [k, v] : assignments[i]) c.set(k, v);
    const ModelSpec m = model_spec_from(c, fc.model);
    const int tau = c.get_ints("model.horizons", fc.horizons).front();
    const CovarianceState cov0 = init_from_batch(batch_rows(z, 0, sp.train), Nonstationary{m.gamma});
    const Matrix shift0 = trace_normalize(cov0.cov);
    const NetworkParams init = init_from_seed(make_arch(m, 1, m.memory, n), derive_seed(fc.seed, 1));
    const ForecastTask task = make_task(z, tau, 1);
    const PositionRange tr = origins_for_rows(0, sp.train, tau, init.receptive_field());
    const PositionRange va = origins_for_rows(sp.train, sp.train + sp.val, tau, init.receptive_field());
    require_range(tr, "training");
    require_range(va, "validation");
    const TrainReport rep = train_offline(init, shift0, task, tr, va, train_config(m, derive_seed(fc.seed, 2)));
    out.points[i] = GridPoint{assignments[i], rep.best_val, init.parameter_count()};
  });

  auto label = [](const GridPoint& p) {
    std::string s;
    for (const auto& [k, v] : p.assignment) s += (s.empty() ? "" : ";") + k + "=" + v;
    return s;
  };
  for (std::size_t i = 1; i < out.points.size(); ++i) {
    const GridPoint& a = out.points[i];
    const GridPoint& b = out.points[out.best];
    if (a.val_loss < b.val_loss ||
        (a.val_loss == b.val_loss &&
         (a.parameter_count < b.parameter_count ||
          (a.parameter_count == b.parameter_count && label(a) < label(b)))))
      out.best = i;
  }
  for (std::size_t i = 0; i < out.points.size(); ++i) {
    const std::string model = "STVNN[" + label(out.points[i]) + "]";
    out.table.add({"grid", model, dataset, "0", 0.0, "val_loss", out.points[i].val_loss});
    out.table.add({"grid", model, dataset, "0", 0.0, "parameters", static_cast<double>(out.points[i].parameter_count)});
    out.table.add({"grid", model, dataset, "0", 0.0, "selected", i == out.best ? 1.0 : 0.0});
  }
  return out;
}

}  // namespace stvnn
