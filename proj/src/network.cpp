#include "stvnn/network.hpp"

#include <cmath>

namespace stvnn {

int NetworkParams::receptive_field() const {
  int r = 1;
  for (const auto& bank : layers) r += bank.memory() - 1;
  return r;
}

int NetworkParams::input_width() const { return layers.empty() ? 0 : layers.front().in_width(); }

int NetworkParams::embedding_width() const { return layers.empty() ? 0 : layers.back().out_width(); }

std::size_t NetworkParams::parameter_count() const {
  std::size_t n = 0;
  for_each_block([&](const Matrix& m) { n += static_cast<std::size_t>(m.size()); });
  return n;
}

bool NetworkParams::all_finite() const {
  bool ok = true;
  for_each_block([&](const Matrix& m) { ok = ok && m.allFinite(); });
  return ok;
}

NetworkParams NetworkParams::zeros_like() const {
  NetworkParams z = *this;
  z.for_each_block([](Matrix& m) { m.setZero(); });
  return z;
}

std::uint64_t fingerprint(const NetworkParams& params) {
  // FNV-1a over the raw bytes of every coefficient.
  std::uint64_t h = 14695981039346656037ULL;
  params.for_each_block([&](const Matrix& m) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(m.data());
    const std::size_t n = static_cast<std::size_t>(m.size()) * sizeof(double);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  });
  return h;
}

namespace {

Matrix uniform_matrix(Eigen::Index rows, Eigen::Index cols, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = dist(rng);
  return m;
}

Matrix leaky(const Matrix& x, double slope) {
  return x.unaryExpr([slope](double v) { return leaky_relu(v, slope); });
}

// d_out (elementwise) times the LeakyReLU derivative evaluated at `pre`.
Matrix leaky_backward(const Matrix& pre, const Matrix& d_out, double slope) {
  return d_out.binaryExpr(pre, [slope](double d, double p) { return p > 0.0 ? d : slope * d; });
}

Matrix to_readout_rows(const Matrix& embedding, ReadoutMode mode) {
  if (mode == ReadoutMode::PerNode) return embedding;
  // node-major flattening: column n*F + f holds embedding(n, f)
  Matrix row(1, embedding.size());
  for (Eigen::Index n = 0; n < embedding.rows(); ++n)
    for (Eigen::Index f = 0; f < embedding.cols(); ++f) row(0, n * embedding.cols() + f) = embedding(n, f);
  return row;
}

Matrix from_flat_rows(const Matrix& row, Eigen::Index nodes) {
  const Eigen::Index per = row.cols() / nodes;
  Matrix out(nodes, per);
  for (Eigen::Index n = 0; n < nodes; ++n)
    for (Eigen::Index d = 0; d < per; ++d) out(n, d) = row(0, n * per + d);
  return out;
}

void check_cov(const Matrix& cov, Eigen::Index nodes) {
  if (cov.rows() != nodes || cov.cols() != nodes) throw PreconditionError("network: covariance shape mismatch");
  if (!cov.allFinite()) throw InputError("network: non-finite covariance");
}

}  // namespace

Mlp init_mlp(Eigen::Index in, Eigen::Index hidden, Eigen::Index out, std::mt19937_64& rng) {
  Mlp m;
  const double b1 = 1.0 / std::sqrt(static_cast<double>(in));
  const double b2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  m.w1 = uniform_matrix(in, hidden, b1, rng);
  m.b1 = uniform_matrix(1, hidden, b1, rng);
  m.w2 = uniform_matrix(hidden, out, b2, rng);
  m.b2 = uniform_matrix(1, out, b2, rng);
  return m;
}

NetworkParams init_network(const Architecture& arch, std::mt19937_64& rng) {
  if (arch.widths.empty()) throw PreconditionError("init_network: need at least one layer");
  NetworkParams p;
  p.nonlinear = arch.nonlinear;
  p.slope = arch.slope;
  p.readout_mode = arch.readout_mode;
  int in = arch.input_width;
  for (int width : arch.widths) {
    FilterBank bank(arch.order, arch.memory, in, width);
    // Each lag is scaled like an independent (K+1)*F_in fan-in filter.
    const double bound = 1.0 / std::sqrt(static_cast<double>((arch.order + 1) * in));
    for (auto& tap : bank.taps()) tap = uniform_matrix(tap.rows(), tap.cols(), bound, rng);
    p.layers.push_back(std::move(bank));
    in = width;
  }
  if (arch.readout) {
    const int hidden = arch.readout_hidden > 0 ? arch.readout_hidden : in;
    if (arch.readout_mode == ReadoutMode::PerNode) {
      p.readout = init_mlp(in, hidden, arch.out_dim, rng);
    } else {
      if (arch.nodes < 1) throw PreconditionError("init_network: flattened readout needs the node count");
      p.readout = init_mlp(static_cast<Eigen::Index>(in) * arch.nodes, hidden,
                           static_cast<Eigen::Index>(arch.out_dim) * arch.nodes, rng);
    }
  }
  return p;
}

Matrix mlp_forward(const Mlp& mlp, const Matrix& rows, double slope, MlpTrace* trace) {
  if (rows.cols() != mlp.in_dim()) throw PreconditionError("mlp_forward: input width mismatch");
  Matrix pre = rows * mlp.w1;
  pre.rowwise() += mlp.b1.row(0);
  Matrix out = leaky(pre, slope) * mlp.w2;
  out.rowwise() += mlp.b2.row(0);
  if (trace) {
    trace->input = rows;
    trace->hidden_pre = std::move(pre);
  }
  return out;
}

Matrix mlp_backward(const Mlp& mlp, const MlpTrace& trace, const Matrix& d_out, double slope, Mlp& grad) {
  const Matrix hidden = leaky(trace.hidden_pre, slope);
  grad.w2.noalias() += hidden.transpose() * d_out;
  grad.b2 += d_out.colwise().sum();
  const Matrix d_pre = leaky_backward(trace.hidden_pre, d_out * mlp.w2.transpose(), slope);
  grad.w1.noalias() += trace.input.transpose() * d_pre;
  grad.b1 += d_pre.colwise().sum();
  return d_pre * mlp.w1.transpose();
}

SequenceOutput forward_sequence(const NetworkParams& params, const Matrix& cov, std::span<const Matrix> inputs) {
  if (params.layers.empty()) throw PreconditionError("forward: network has no layers");
  const int steps = static_cast<int>(inputs.size());
  const int field = params.receptive_field();
  if (steps < field) throw PreconditionError("forward: input sequence shorter than the receptive field");
  const Eigen::Index nodes = inputs[0].rows();
  check_cov(cov, nodes);
  for (const auto& x : inputs)
    if (x.rows() != nodes || x.cols() != params.input_width())
      throw PreconditionError("forward: input frame shape mismatch");

  SequenceOutput out;
  ForwardCache& cache = out.cache;
  cache.steps = steps;
  cache.params_fingerprint = fingerprint(params);

  // Activated outputs of the previous layer; starts as the raw inputs.
  std::vector<Matrix> current(inputs.begin(), inputs.end());
  int in_offset = 0;
  for (const auto& bank : params.layers) {
    if (bank.in_width() != current.front().cols()) throw PreconditionError("forward: layer widths do not chain");
    LayerTrace trace;
    trace.in_offset = in_offset;
    trace.offset = in_offset + bank.memory() - 1;
    trace.shifted.reserve(current.size());
    for (const auto& z : current) trace.shifted.push_back(shift_stack(cov, z, bank.order()));

    std::vector<Matrix> next;
    next.reserve(steps - trace.offset);
    for (int s = trace.offset; s < steps; ++s) {
      Matrix pre = Matrix::Zero(nodes, bank.out_width());
      for (int lag = 0; lag < bank.memory(); ++lag)
        pre.noalias() += trace.shifted[s - lag - in_offset] * bank.tap(lag);
      if (!pre.allFinite()) throw NumericalError("forward: non-finite filter output");
      next.push_back(params.nonlinear ? leaky(pre, params.slope) : pre);
      trace.pre.push_back(std::move(pre));
    }
    in_offset = trace.offset;
    cache.layers.push_back(std::move(trace));
    current = std::move(next);
  }

  out.embeddings = std::move(current);
  for (const auto& emb : out.embeddings) {
    if (params.readout) {
      MlpTrace rt;
      Matrix y = mlp_forward(*params.readout, to_readout_rows(emb, params.readout_mode), params.slope, &rt);
      if (params.readout_mode == ReadoutMode::Flattened) y = from_flat_rows(y, nodes);
      if (!y.allFinite()) throw NumericalError("forward: non-finite prediction");
      cache.readout.push_back(std::move(rt));
      out.predictions.push_back(std::move(y));
    } else {
      out.predictions.push_back(emb);
    }
  }
  cache.predictions = out.predictions;
  return out;
}

NetworkParams backward_sequence(const NetworkParams& params, const ForwardCache& cache, const Matrix& cov,
                                std::span<const Matrix> d_predictions) {
  if (cache.layers.size() != params.layers.size() || cache.params_fingerprint != fingerprint(params))
    throw PreconditionError("backward: cache was not produced by these parameters");
  if (d_predictions.size() != cache.predictions.size())
    throw PreconditionError("backward: gradient count does not match cached positions");

  NetworkParams grad = params.zeros_like();
  const Eigen::Index nodes = cov.rows();

  // d loss / d embedding per output position.
  std::vector<Matrix> d_current;
  d_current.reserve(d_predictions.size());
  for (std::size_t p = 0; p < d_predictions.size(); ++p) {
    const Matrix& dy = d_predictions[p];
    if (dy.rows() != cache.predictions[p].rows() || dy.cols() != cache.predictions[p].cols())
      throw PreconditionError("backward: gradient shape mismatch");
    if (params.readout) {
      Matrix dy_rows = dy;
      if (params.readout_mode == ReadoutMode::Flattened) dy_rows = to_readout_rows(dy, ReadoutMode::Flattened);
      Matrix d_in = mlp_backward(*params.readout, cache.readout[p], dy_rows, params.slope, *grad.readout);
      if (params.readout_mode == ReadoutMode::Flattened) d_in = from_flat_rows(d_in, nodes);
      d_current.push_back(std::move(d_in));
    } else {
      d_current.push_back(dy);
    }
  }

  for (int l = static_cast<int>(params.layers.size()) - 1; l >= 0; --l) {
    const FilterBank& bank = params.layers[l];
    FilterBank& gbank = grad.layers[l];
    const LayerTrace& trace = cache.layers[l];
    const int f_in = bank.in_width();
    const int n_in = static_cast<int>(trace.shifted.size());
    std::vector<Matrix> d_shifted(n_in, Matrix::Zero(nodes, (bank.order() + 1) * f_in));

    for (std::size_t q = 0; q < trace.pre.size(); ++q) {
      const int s = trace.offset + static_cast<int>(q);
      const Matrix d_pre =
          params.nonlinear ? leaky_backward(trace.pre[q], d_current[q], params.slope) : d_current[q];
      for (int lag = 0; lag < bank.memory(); ++lag) {
        const int idx = s - lag - trace.in_offset;
        gbank.tap(lag).noalias() += trace.shifted[idx].transpose() * d_pre;
        if (l > 0) d_shifted[idx].noalias() += d_pre * bank.tap(lag).transpose();
      }
    }
    if (l == 0) break;

    // d Z = sum_k C^k dS_k (C symmetric), evaluated by Horner's scheme.
    std::vector<Matrix> d_prev;
    d_prev.reserve(n_in);
    for (int i = 0; i < n_in; ++i) {
      Matrix acc = d_shifted[i].middleCols(bank.order() * f_in, f_in);
      for (int k = bank.order() - 1; k >= 0; --k) acc = cov * acc + d_shifted[i].middleCols(k * f_in, f_in);
      d_prev.push_back(std::move(acc));
    }
    d_current = std::move(d_prev);
  }
  return grad;
}

ForwardResult forward(const NetworkParams& params, const Matrix& cov, const SignalWindow& window) {
  if (window.length() != params.receptive_field())
    throw PreconditionError("forward: window length must equal the receptive field");
  std::vector<Matrix> seq(window.frames.rbegin(), window.frames.rend());
  SequenceOutput out = forward_sequence(params, cov, seq);
  return ForwardResult{std::move(out.embeddings.front()), std::move(out.predictions.front()), std::move(out.cache)};
}

NetworkParams backward(const NetworkParams& params, const ForwardCache& cache, const Matrix& cov,
                       const Matrix& target) {
  if (cache.predictions.size() != 1) throw PreconditionError("backward: expected a single-window cache");
  const Matrix d = mse_gradient(cache.predictions.front(), target);
  return backward_sequence(params, cache, cov, std::span<const Matrix>(&d, 1));
}

double mse_loss(const Matrix& prediction, const Matrix& target) {
  if (prediction.rows() != target.rows() || prediction.cols() != target.cols())
    throw PreconditionError("mse_loss: shape mismatch");
  return (prediction - target).squaredNorm() / static_cast<double>(prediction.size());
}

Matrix mse_gradient(const Matrix& prediction, const Matrix& target) {
  if (prediction.rows() != target.rows() || prediction.cols() != target.cols())
    throw PreconditionError("mse_gradient: shape mismatch");
  return 2.0 * (prediction - target) / static_cast<double>(prediction.size());
}

}  // namespace stvnn
