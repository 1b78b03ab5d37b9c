#include <gtest/gtest.h>

#include <random>

#include "stvnn/network.hpp"
#include "stvnn/online.hpp"
#include "stvnn/optim.hpp"
#include "stvnn/spectral.hpp"
#include "stvnn/stream_stats.hpp"
#include "stvnn/stvf.hpp"
#include "stvnn/training.hpp"
#include "test_support.hpp"

namespace stvnn {
namespace {

using testing::random_matrix;
using testing::random_psd;
using testing::rel_diff;

FilterBank random_bank(int k, int t, int fin, int fout, std::mt19937_64& rng) {
  FilterBank b(k, t, fin, fout);
  for (auto& tap : b.taps()) tap = random_matrix(tap.rows(), tap.cols(), rng);
  return b;
}

SignalWindow random_window(int n, int f, int t, std::mt19937_64& rng) {
  SignalWindow w;
  for (int i = 0; i < t; ++i) w.frames.push_back(random_matrix(n, f, rng));
  return w;
}

// Spectral form: sum over lags of V diag(h_lag,g,f(lambda)) V^T x_lag[:, g].
Matrix spectral_filter(const Matrix& c, const FilterBank& b, const SignalWindow& w) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(c);
  const Matrix& v = es.eigenvectors();
  const Vector& lam = es.eigenvalues();
  Matrix out = Matrix::Zero(c.rows(), b.out_width());
  for (int lag = 0; lag < b.memory(); ++lag)
    for (int g = 0; g < b.in_width(); ++g)
      for (int f = 0; f < b.out_width(); ++f) {
        Vector resp(lam.size());
        for (Eigen::Index i = 0; i < lam.size(); ++i) {
          double s = 0.0;
          for (int k = 0; k <= b.order(); ++k) s += b(k, lag, g, f) * std::pow(lam(i), k);
          resp(i) = s;
        }
        out.col(f) += v * resp.asDiagonal() * v.transpose() * w.frames[lag].col(g);
      }
  return out;
}

TEST(Stvf, IdentityAndOneHop) {
  std::mt19937_64 rng(1);
  const Matrix c = random_psd(5, rng);
  SignalWindow w = random_window(5, 1, 1, rng);
  FilterBank id(0, 1, 1, 1);
  id(0, 0, 0, 0) = 1.0;
  EXPECT_TRUE(stvf_apply(c, id, w).isApprox(w.frames[0]));
  FilterBank hop(1, 1, 1, 1);
  hop(1, 0, 0, 0) = 1.0;
  EXPECT_LT((stvf_apply(c, hop, w) - c * w.frames[0]).norm(), 1e-12);
}

TEST(Stvf, MatchesSpectralEvaluationOnRandomInstances) {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> nd(2, 16), kd(0, 4), td(1, 6), fd(1, 3);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = nd(rng), k = kd(rng), t = td(rng), fin = fd(rng), fout = fd(rng);
    const Matrix c = trace_normalize(random_psd(n, rng)) * 3.0;
    const FilterBank b = random_bank(k, t, fin, fout, rng);
    const SignalWindow w = random_window(n, fin, t, rng);
    ASSERT_LE(rel_diff(stvf_apply(c, b, w), spectral_filter(c, b, w)), 1e-9) << "instance " << trial;
  }
}

TEST(Stvf, RejectsMismatchedShapes) {
  std::mt19937_64 rng(3);
  const FilterBank b = random_bank(1, 2, 1, 1, rng);
  EXPECT_ANY_THROW(stvf_apply(Matrix::Identity(4, 4), b, random_window(4, 1, 1, rng)));
  EXPECT_ANY_THROW(stvf_apply(Matrix::Identity(4, 4), b, random_window(3, 1, 2, rng)));
  EXPECT_ANY_THROW(stvf_apply(Matrix::Identity(4, 4), b, random_window(4, 2, 2, rng)));
}

TEST(FrequencyResponse, ConstantRampAndPowerSum) {
  Vector lam = Vector::LinSpaced(32, -1.0, 2.0);
  FilterBank c0(2, 1, 1, 1);
  c0(0, 0, 0, 0) = 0.7;
  const FrequencyResponse r0 = frequency_response(c0, lam);
  for (int i = 0; i < 32; ++i) EXPECT_DOUBLE_EQ(r0(0, i, 0, 0), 0.7);
  FilterBank ramp(1, 1, 1, 1);
  ramp(1, 0, 0, 0) = 1.0;
  const FrequencyResponse r1 = frequency_response(ramp, lam);
  for (int i = 0; i < 32; ++i) EXPECT_DOUBLE_EQ(r1(0, i, 0, 0), lam(i));

  std::mt19937_64 rng(5);
  const FilterBank b = random_bank(4, 3, 2, 2, rng);
  const FrequencyResponse r = frequency_response(b, lam);
  for (int lag = 0; lag < 3; ++lag)
    for (int i = 0; i < 32; ++i)
      for (int g = 0; g < 2; ++g)
        for (int f = 0; f < 2; ++f) {
          double s = 0.0;
          for (int k = 0; k <= 4; ++k) s += b(k, lag, g, f) * std::pow(lam(i), k);
          EXPECT_NEAR(r(lag, i, g, f), s, 1e-12 * std::max(1.0, std::abs(s)));
        }
}

TEST(Lipschitz, AnalyticCases) {
  FilterBank constant(0, 2, 1, 1);
  constant(0, 0, 0, 0) = 3.0;
  EXPECT_DOUBLE_EQ(estimate_lipschitz(constant, -1.0, 1.0), 0.0);
  FilterBank ramp(1, 1, 1, 1);
  ramp(1, 0, 0, 0) = 1.0;
  EXPECT_NEAR(estimate_lipschitz(ramp, 0.3, 5.0), 1.0, 1e-12);
  FilterBank square(2, 1, 1, 1);
  square(2, 0, 0, 0) = 1.0;
  EXPECT_NEAR(estimate_lipschitz(square, 0.0, 1.0), 2.0, 1e-12);
}

// ---------------------------------------------------------------- network

NetworkParams small_network(int n, std::vector<int> widths, int k, int t, std::mt19937_64& rng,
                            ReadoutMode mode = ReadoutMode::PerNode) {
  Architecture a;
  a.order = k;
  a.memory = t;
  a.widths = std::move(widths);
  a.readout_mode = mode;
  a.nodes = n;
  return init_network(a, rng);
}

Matrix naive_mlp(const Mlp& m, const Matrix& rows, double slope) {
  Matrix h = rows * m.w1;
  for (Eigen::Index i = 0; i < h.rows(); ++i)
    for (Eigen::Index j = 0; j < h.cols(); ++j) {
      const double v = h(i, j) + m.b1(0, j);
      h(i, j) = v > 0 ? v : slope * v;
    }
  Matrix y = h * m.w2;
  for (Eigen::Index i = 0; i < y.rows(); ++i) y.row(i) += m.b2.row(0);
  return y;
}

// Straight-line evaluation with explicit matrix powers. frames: oldest first.
Matrix naive_layer_output(const NetworkParams& p, const Matrix& c, const std::vector<Matrix>& frames, int layer,
                          int time) {
  if (layer < 0) return frames[time];
  const FilterBank& b = p.layers[layer];
  Matrix out = Matrix::Zero(c.rows(), b.out_width());
  for (int lag = 0; lag < b.memory(); ++lag) {
    const Matrix z = naive_layer_output(p, c, frames, layer - 1, time - lag);
    Matrix ck = Matrix::Identity(c.rows(), c.cols());
    for (int k = 0; k <= b.order(); ++k) {
      for (int g = 0; g < b.in_width(); ++g)
        for (int f = 0; f < b.out_width(); ++f) out.col(f) += b(k, lag, g, f) * (ck * z.col(g));
      ck = ck * c;
    }
  }
  if (p.nonlinear) out = out.unaryExpr([&](double v) { return v > 0 ? v : p.slope * v; });
  return out;
}

TEST(Network, TransparentNetworkPassesInputThrough) {
  NetworkParams p;
  FilterBank b(0, 1, 1, 1);
  b(0, 0, 0, 0) = 1.0;
  p.layers.push_back(b);
  Mlp m{Matrix::Ones(1, 1), Matrix::Zero(1, 1), Matrix::Ones(1, 1), Matrix::Zero(1, 1)};
  p.readout = m;
  SignalWindow w;
  w.frames.push_back(Matrix::Constant(4, 1, 0.5));
  w.frames.front()(2, 0) = 2.0;
  EXPECT_TRUE(forward(p, Matrix::Identity(4, 4), w).prediction.isApprox(w.frames[0]));
}

TEST(Network, ZeroParametersGiveReadoutBias) {
  std::mt19937_64 rng(6);
  NetworkParams p = small_network(5, {3}, 2, 2, rng).zeros_like();
  p.readout->b2(0, 0) = 0.25;
  const SignalWindow w = random_window(5, 1, p.receptive_field(), rng);
  EXPECT_TRUE(forward(p, random_psd(5, rng), w).prediction.isApprox(Matrix::Constant(5, 1, 0.25)));
}

TEST(Network, MatchesStraightLineEvaluation) {
  std::mt19937_64 rng(7);
  for (ReadoutMode mode : {ReadoutMode::PerNode, ReadoutMode::Flattened}) {
    const NetworkParams p = small_network(8, {4, 3}, 2, 3, rng, mode);
    const Matrix c = trace_normalize(random_psd(8, rng));
    const SignalWindow w = random_window(8, 1, p.receptive_field(), rng);
    const ForwardResult r = forward(p, c, w);
    std::vector<Matrix> frames(w.frames.rbegin(), w.frames.rend());
    const int last = static_cast<int>(frames.size()) - 1;
    const Matrix emb = naive_layer_output(p, c, frames, 1, last);
    EXPECT_LT(rel_diff(r.embedding, emb), 1e-12);
    Matrix pred;
    if (mode == ReadoutMode::PerNode) {
      pred = naive_mlp(*p.readout, emb, p.slope);
    } else {
      Matrix flat(1, emb.size());
      for (Eigen::Index n = 0; n < emb.rows(); ++n) flat.block(0, n * emb.cols(), 1, emb.cols()) = emb.row(n);
      const Matrix y = naive_mlp(*p.readout, flat, p.slope);
      pred = Matrix(8, 1);
      for (int n = 0; n < 8; ++n) pred(n, 0) = y(0, n);
    }
    EXPECT_LT(rel_diff(r.prediction, pred), 1e-12);
  }
}

TEST(Network, SequenceOutputsMatchSlidingWindows) {
  std::mt19937_64 rng(8);
  const NetworkParams p = small_network(6, {4, 2}, 1, 2, rng);
  const Matrix c = trace_normalize(random_psd(6, rng));
  std::vector<Matrix> seq;
  for (int i = 0; i < 9; ++i) seq.push_back(random_matrix(6, 1, rng));
  const SequenceOutput s = forward_sequence(p, c, seq);
  const int field = p.receptive_field();
  ASSERT_EQ(static_cast<int>(s.predictions.size()), 9 - field + 1);
  for (int pos = 0; pos < static_cast<int>(s.predictions.size()); ++pos) {
    SignalWindow w;
    for (int lag = 0; lag < field; ++lag) w.frames.push_back(seq[pos + field - 1 - lag]);
    EXPECT_EQ(forward(p, c, w).prediction, s.predictions[pos]);
  }
}

TEST(Loss, MseExamplesAndLoopOracle) {
  std::mt19937_64 rng(9);
  const Matrix a = random_matrix(7, 2, rng), b = random_matrix(7, 2, rng);
  EXPECT_EQ(mse_loss(a, a), 0.0);
  EXPECT_DOUBLE_EQ(mse_loss(a.array() + 1.0, a), 1.0);
  double s = 0.0;
  for (int i = 0; i < 7; ++i)
    for (int j = 0; j < 2; ++j) s += (a(i, j) - b(i, j)) * (a(i, j) - b(i, j));
  EXPECT_NEAR(mse_loss(a, b), s / 14.0, 1e-14);
  EXPECT_ANY_THROW(mse_loss(a, Matrix::Zero(7, 1)));
}

double loss_at(const NetworkParams& p, const Matrix& c, const SignalWindow& w, const Matrix& y) {
  return mse_loss(forward(p, c, w).prediction, y);
}

// Relative agreement with an absolute floor for coordinates whose gradient is ~0.
bool close(double analytic, double numeric, double tol) {
  return std::abs(analytic - numeric) <= tol * std::max({std::abs(analytic), std::abs(numeric), 1e-6});
}

TEST(Backward, FiniteDifferencesOnRandomCoordinates) {
  std::mt19937_64 rng(10);
  for (ReadoutMode mode : {ReadoutMode::PerNode, ReadoutMode::Flattened}) {
    const NetworkParams p = small_network(6, {5, 4}, 2, 3, rng, mode);
    const Matrix c = trace_normalize(random_psd(6, rng));
    const SignalWindow w = random_window(6, 1, p.receptive_field(), rng);
    const Matrix y = random_matrix(6, 1, rng);
    const NetworkParams g = backward(p, forward(p, c, w).cache, c, y);

    std::vector<double> analytic;
    g.for_each_block([&](const Matrix& m) {
      for (Eigen::Index i = 0; i < m.size(); ++i) analytic.push_back(m.data()[i]);
    });
    std::uniform_int_distribution<std::size_t> pick(0, analytic.size() - 1);
    for (int s = 0; s < 60; ++s) {
      const std::size_t idx = pick(rng);
      auto perturbed = [&](double delta) {
        NetworkParams q = p;
        std::size_t seen = 0;
        q.for_each_block([&](Matrix& m) {
          if (idx >= seen && idx < seen + static_cast<std::size_t>(m.size())) m.data()[idx - seen] += delta;
          seen += m.size();
        });
        return loss_at(q, c, w, y);
      };
      const double h = 1e-6;
      const double numeric = (perturbed(h) - perturbed(-h)) / (2 * h);
      EXPECT_TRUE(close(analytic[idx], numeric, 1e-4)) << analytic[idx] << " vs " << numeric;
    }
  }
}

TEST(Backward, ZeroLossGivesZeroGradient) {
  std::mt19937_64 rng(11);
  const NetworkParams p = small_network(5, {3}, 1, 2, rng);
  const Matrix c = trace_normalize(random_psd(5, rng));
  const SignalWindow w = random_window(5, 1, p.receptive_field(), rng);
  const ForwardResult r = forward(p, c, w);
  const NetworkParams g = backward(p, r.cache, c, r.prediction);
  g.for_each_block([](const Matrix& m) { EXPECT_EQ(m.cwiseAbs().maxCoeff(), 0.0); });
}

TEST(Backward, SingleLinearFilterMatchesLeastSquaresGradient) {
  std::mt19937_64 rng(12);
  const int n = 7, k = 2, t = 3;
  NetworkParams p;
  p.nonlinear = false;
  p.layers.push_back(random_bank(k, t, 1, 1, rng));
  const Matrix c = trace_normalize(random_psd(n, rng));
  const SignalWindow w = random_window(n, 1, t, rng);
  const Matrix y = random_matrix(n, 1, rng);
  // Columns of A: C^k x_{lag}, ordered as the tap rows (lag-major, then k).
  Matrix a(n, (k + 1) * t);
  Vector h((k + 1) * t);
  for (int lag = 0; lag < t; ++lag) {
    Matrix ck = Matrix::Identity(n, n);
    for (int kk = 0; kk <= k; ++kk) {
      a.col(lag * (k + 1) + kk) = ck * w.frames[lag];
      h(lag * (k + 1) + kk) = p.layers[0](kk, lag, 0, 0);
      ck = ck * c;
    }
  }
  const Vector expect = 2.0 * a.transpose() * (a * h - y.col(0)) / n;
  const NetworkParams g = backward(p, forward(p, c, w).cache, c, y);
  for (int lag = 0; lag < t; ++lag)
    for (int kk = 0; kk <= k; ++kk)
      EXPECT_NEAR(g.layers[0](kk, lag, 0, 0), expect(lag * (k + 1) + kk), 1e-12);
}

TEST(Backward, RejectsStaleCache) {
  std::mt19937_64 rng(13);
  NetworkParams p = small_network(4, {2}, 1, 1, rng);
  const Matrix c = Matrix::Identity(4, 4) / 4.0;
  const SignalWindow w = random_window(4, 1, 1, rng);
  const ForwardResult r = forward(p, c, w);
  p.layers[0](0, 0, 0, 0) += 1.0;
  EXPECT_THROW(backward(p, r.cache, c, Matrix::Zero(4, 1)), PreconditionError);
}

// ---------------------------------------------------------------- optimizers

NetworkParams scalar_params(double v) {
  NetworkParams p;
  FilterBank b(0, 1, 1, 1);
  b(0, 0, 0, 0) = v;
  p.layers.push_back(b);
  p.nonlinear = false;
  return p;
}

TEST(Sgd, Examples) {
  EXPECT_EQ(sgd_step(scalar_params(1.0), scalar_params(0.0), 0.3).layers[0](0, 0, 0, 0), 1.0);
  EXPECT_EQ(sgd_step(scalar_params(1.0), scalar_params(2.0), 0.5).layers[0](0, 0, 0, 0), 0.0);
  EXPECT_THROW(sgd_step(scalar_params(1.0), scalar_params(std::nan("")), 0.1), NumericalError);
}

TEST(Sgd, ConvexFilterLossIsMonotone) {
  std::mt19937_64 rng(14);
  const int n = 6;
  NetworkParams p;
  p.nonlinear = false;
  p.layers.push_back(FilterBank(2, 2, 1, 1));
  const Matrix c = trace_normalize(random_psd(n, rng));
  const SignalWindow w = random_window(n, 1, 2, rng);
  const Matrix y = random_matrix(n, 1, rng);
  double previous = loss_at(p, c, w, y);
  for (int i = 0; i < 200; ++i) {
    p = sgd_step(p, backward(p, forward(p, c, w).cache, c, y), 0.05);
    const double now = loss_at(p, c, w, y);
    ASSERT_LE(now, previous + 1e-15);
    previous = now;
  }
}

TEST(Adam, ZeroGradientAndFirstStep) {
  const NetworkParams p = scalar_params(1.0);
  auto [same, s0] = adam_step(p, scalar_params(0.0), adam_init(p), 0.1);
  EXPECT_EQ(same.layers[0](0, 0, 0, 0), 1.0);
  NetworkParams q;
  FilterBank b(0, 1, 1, 3);
  b.tap(0) << 0.3, -2.0, 1e-3;
  q.layers.push_back(b);
  auto [moved, s1] = adam_step(q.zeros_like(), q, adam_init(q), 0.01);
  EXPECT_NEAR(moved.layers[0](0, 0, 0, 0), -0.01, 1e-6);
  EXPECT_NEAR(moved.layers[0](0, 0, 0, 1), 0.01, 1e-6);
  EXPECT_NEAR(moved.layers[0](0, 0, 0, 2), -0.01, 1e-4);
  EXPECT_EQ(s1.step, 1);
}

TEST(Adam, ConvergesOnQuadratic) {
  std::mt19937_64 rng(15);
  const int n = 5;
  NetworkParams p;
  p.nonlinear = false;
  p.layers.push_back(FilterBank(1, 2, 1, 1));
  const Matrix c = trace_normalize(random_psd(n, rng));
  const SignalWindow w = random_window(n, 1, 2, rng);
  NetworkParams target = p;
  target.layers[0].tap(0) << 0.5, -0.3;
  target.layers[0].tap(1) << 0.2, 0.1;
  const Matrix y = forward(target, c, w).prediction;
  AdamState st = adam_init(p);
  for (int i = 0; i < 500; ++i) adam_step_in_place(p, backward(p, forward(p, c, w).cache, c, y), st, 0.05);
  EXPECT_LT(loss_at(p, c, w, y), 1e-6);
}

// ---------------------------------------------------------------- training

TEST(Training, ZeroEpochsKeepsParameters) {
  std::mt19937_64 rng(16);
  const Series x = random_matrix(60, 4, rng);
  const NetworkParams p = small_network(4, {3}, 1, 2, rng);
  const ForecastTask task = make_task(x, 1);
  TrainConfig cfg;
  cfg.epochs = 0;
  const TrainReport r = train_offline(p, Matrix::Identity(4, 4) / 4, task, origins_for_rows(0, 40, 1, 2),
                                     origins_for_rows(40, 60, 1, 2), cfg);
  EXPECT_EQ(fingerprint(r.params), fingerprint(p));
  EXPECT_EQ(r.best_epoch, -1);
}

TEST(Training, RealizableOneHopTargetIsLearned) {
  // y_t = C x_t, learned by a single linear filter with K = 1, T = 1
  std::mt19937_64 rng(17);
  const int n = 6, rows = 400;
  const Matrix c = trace_normalize(random_psd(n, rng)) * n;
  const Series x = random_matrix(rows, n, rng);
  ForecastTask task;
  task.horizon = 1;
  for (int r = 0; r < rows; ++r) {
    task.inputs.push_back(x.row(r).transpose());
    task.targets.push_back(c * x.row(r).transpose());
  }
  NetworkParams p;
  p.nonlinear = false;
  p.layers.push_back(random_bank(1, 1, 1, 1, rng));
  TrainConfig cfg;
  cfg.optimizer = OptimizerKind::Sgd;
  cfg.lr = 0.1;
  cfg.epochs = 40;
  const TrainReport r = train_offline(p, c, task, {0, 300}, {300, 400}, cfg);
  EXPECT_LT(r.train_loss.back(), 1e-4);
  EXPECT_NEAR(r.params.layers[0](1, 0, 0, 0), 1.0, 1e-2);
}

TEST(Training, OriginsNeverReachPastTheirRows) {
  const PositionRange r = origins_for_rows(100, 150, 3, 5);
  EXPECT_EQ(r.begin, 97);
  EXPECT_EQ(r.end, 147);
  const PositionRange first = origins_for_rows(0, 50, 1, 5);
  EXPECT_EQ(first.begin, 4);
  EXPECT_EQ(first.end, 49);
}

TEST(Training, MakeTaskStacksLags) {
  Series x(4, 2);
  x << 1, 2, 3, 4, 5, 6, 7, 8;
  const ForecastTask t = make_task(x, 2, 2);
  ASSERT_EQ(t.targets.size(), 2u);
  EXPECT_EQ(t.targets[0](1, 0), 6.0);
  EXPECT_EQ(t.inputs[1](0, 0), 3.0);
  EXPECT_EQ(t.inputs[1](0, 1), 1.0);
}

// ---------------------------------------------------------------- online

TEST(Online, ZeroRateAndZeroForgettingIsPureEvaluation) {
  std::mt19937_64 rng(18);
  const NetworkParams p = small_network(5, {3}, 1, 2, rng);
  CovarianceState cov = init_from_batch(random_matrix(30, 5, rng), Nonstationary{0.0});
  const SignalWindow w = random_window(5, 1, p.receptive_field(), rng);
  const Vector x = random_matrix(5, 1, rng).col(0);
  const OnlineStepResult r = online_step(p, cov, w, x, 0.0);
  EXPECT_EQ(fingerprint(r.params), fingerprint(p));
  EXPECT_EQ(r.cov_state.cov, cov.cov);
  EXPECT_EQ(r.prediction, forward(p, trace_normalize(cov.cov), w).prediction);
  EXPECT_DOUBLE_EQ(r.loss, mse_loss(r.prediction, x));
  EXPECT_EQ(r.window.frames[0], Matrix(x));
}

TEST(Online, ConstantStreamLossDecaysToZero) {
  std::mt19937_64 rng(19);
  const int n = 4;
  const NetworkParams p = small_network(n, {4}, 1, 2, rng);
  CovarianceState cov = init_from_batch(random_matrix(30, n, rng), Nonstationary{0.0});
  OnlineOptions opts;
  opts.eta = 0.05;
  NetworkForecaster f(p, cov, opts);
  const Vector x = Vector::LinSpaced(n, 0.5, 1.0);
  double previous = std::numeric_limits<double>::infinity();
  double first = 0.0;
  for (int t = 0; t < 3000; ++t) {
    auto rec = f.step(x);
    if (!rec) continue;
    if (first == 0.0) first = rec->loss;
    if (t > 10) {
      ASSERT_LE(rec->loss, previous * (1 + 1e-9)) << "step " << t;
    }
    previous = rec->loss;
  }
  EXPECT_LT(previous, 1e-3 * first);
}

TEST(Online, ForecasterMatchesFunctionalStep) {
  std::mt19937_64 rng(20);
  const int n = 5;
  const NetworkParams p = small_network(n, {3, 2}, 1, 2, rng);
  CovarianceState cov = init_from_batch(random_matrix(40, n, rng), Nonstationary{0.1});
  const Series x = random_matrix(30, n, rng);
  OnlineOptions opts;
  opts.eta = 0.01;
  NetworkForecaster f(p, cov, opts);
  const int field = p.receptive_field();
  for (int r = 0; r < field; ++r) f.prime(x.row(r).transpose());
  NetworkParams q = p;
  CovarianceState s = cov;
  SignalWindow w;
  for (int lag = 0; lag < field; ++lag) w.frames.push_back(x.row(field - 1 - lag).transpose());
  for (int r = field; r < 30; ++r) {
    const auto rec = f.step(x.row(r).transpose());
    const OnlineStepResult o = online_step(q, s, w, x.row(r).transpose(), 0.01);
    ASSERT_TRUE(rec.has_value());
    EXPECT_LT((rec->prediction - o.prediction).cwiseAbs().maxCoeff(), 1e-12);
    q = o.params;
    s = o.cov_state;
    w = o.window;
  }
  EXPECT_LT((f.covariance().cov - s.cov).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Online, HorizonForecastsAreScoredWhenTheirTargetArrives) {
  std::mt19937_64 rng(22);
  const int n = 3;
  const NetworkParams p = small_network(n, {2}, 1, 1, rng);
  CovarianceState cov = init_from_batch(random_matrix(20, n, rng), Nonstationary{0.0});
  OnlineOptions opts;
  opts.eta = 0.0;
  opts.horizon = 3;
  NetworkForecaster f(p, cov, opts);
  const Series x = random_matrix(10, n, rng);
  f.prime(x.row(0).transpose());
  std::vector<Matrix> peeks;
  for (int r = 1; r < 10; ++r) {
    peeks.push_back(*f.peek());  // forecast made from rows <= r-1 for row r-1+3
    const auto rec = f.step(x.row(r).transpose());
    if (r < 3) {
      EXPECT_FALSE(rec.has_value());
    } else {
      ASSERT_TRUE(rec.has_value());
      EXPECT_EQ(rec->prediction, peeks[r - 3]);
      EXPECT_EQ(rec->target, Matrix(x.row(r).transpose()));
    }
  }
}

TEST(Online, DeterministicTrajectories) {
  auto run = [] {
    std::mt19937_64 rng(23);
    const NetworkParams p = small_network(4, {3}, 1, 2, rng);
    NetworkForecaster f(p, init_from_batch(random_matrix(20, 4, rng), Nonstationary{0.1}), OnlineOptions{});
    const Series x = random_matrix(50, 4, rng);
    for (int r = 0; r < 50; ++r) f.step(x.row(r).transpose());
    return fingerprint(f.params());
  };
  EXPECT_EQ(run(), run());
}

}  // namespace
}  // namespace stvnn
