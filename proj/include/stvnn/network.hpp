#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "stvnn/stvf.hpp"
#include "stvnn/types.hpp"

namespace stvnn {

// How the readout consumes the N x F_L embedding: one perceptron shared by
// every node row, or a single perceptron over the node-major flattened matrix.
enum class ReadoutMode { PerNode, Flattened };

// Two affine maps with a LeakyReLU between them. Inputs are rows.
struct Mlp {
  Matrix w1;  // in x hidden
  Matrix b1;  // 1 x hidden
  Matrix w2;  // hidden x out
  Matrix b2;  // 1 x out

  Eigen::Index in_dim() const { return w1.rows(); }
  Eigen::Index hidden_dim() const { return w1.cols(); }
  Eigen::Index out_dim() const { return w2.cols(); }
};

struct NetworkParams {
  std::vector<FilterBank> layers;
  std::optional<Mlp> readout;
  ReadoutMode readout_mode = ReadoutMode::PerNode;
  bool nonlinear = true;  // LeakyReLU after every filter layer
  double slope = 0.1;

  // Number of input frames one output depends on: sum_l (T_l - 1) + 1.
  int receptive_field() const;
  int input_width() const;
  int embedding_width() const;
  std::size_t parameter_count() const;
  bool all_finite() const;

  // Visits every trainable block in a fixed order: layer taps (lag order), then
  // readout w1, b1, w2, b2.
  template <class Fn>
  void for_each_block(Fn&& fn) {
    for (auto& bank : layers)
      for (auto& tap : bank.taps()) fn(tap);
    if (readout) {
      fn(readout->w1);
      fn(readout->b1);
      fn(readout->w2);
      fn(readout->b2);
    }
  }
  template <class Fn>
  void for_each_block(Fn&& fn) const {
    for (const auto& bank : layers)
      for (const auto& tap : bank.taps()) fn(tap);
    if (readout) {
      fn(readout->w1);
      fn(readout->b1);
      fn(readout->w2);
      fn(readout->b2);
    }
  }

  NetworkParams zeros_like() const;
};

// Applies fn(a_block, b_block) over two congruent parameter sets.
template <class A, class B, class Fn>
void zip_blocks(A& a, B& b, Fn&& fn) {
  std::vector<std::conditional_t<std::is_const_v<B>, const Matrix*, Matrix*>> rhs;
  b.for_each_block([&](auto& m) { rhs.push_back(&m); });
  std::size_t i = 0;
  a.for_each_block([&](auto& m) {
    if (i >= rhs.size() || rhs[i]->rows() != m.rows() || rhs[i]->cols() != m.cols())
      throw PreconditionError("parameter sets are not congruent");
    fn(m, *rhs[i++]);
  });
  if (i != rhs.size()) throw PreconditionError("parameter sets are not congruent");
}

struct Architecture {
  int order = 2;                   // K
  int memory = 3;                  // T
  int input_width = 1;             // F_in of layer 1
  std::vector<int> widths{32, 16};  // F_out per layer
  bool nonlinear = true;
  bool readout = true;
  int readout_hidden = 0;  // 0 -> F_L
  int out_dim = 1;         // per-node outputs
  ReadoutMode readout_mode = ReadoutMode::PerNode;
  int nodes = 0;           // required for the flattened readout
  double slope = 0.1;
};

NetworkParams init_network(const Architecture& arch, std::mt19937_64& rng);
Mlp init_mlp(Eigen::Index in, Eigen::Index hidden, Eigen::Index out, std::mt19937_64& rng);

inline double leaky_relu(double x, double slope) { return x > 0.0 ? x : slope * x; }

struct MlpTrace {
  Matrix input;
  Matrix hidden_pre;
};

Matrix mlp_forward(const Mlp& mlp, const Matrix& rows, double slope, MlpTrace* trace = nullptr);
// Accumulates parameter gradients into `grad` and returns d loss / d input rows.
Matrix mlp_backward(const Mlp& mlp, const MlpTrace& trace, const Matrix& d_out, double slope, Mlp& grad);

// Per-layer intermediates retained for backpropagation. Times are indices into
// the input sequence; layer l produces outputs from time `offset` onward.
struct LayerTrace {
  int in_offset = 0;
  int offset = 0;
  std::vector<Matrix> shifted;  // [C^0 Z, ..., C^K Z] of the layer input, per input time
  std::vector<Matrix> pre;      // pre-activation output, per output time
};

struct ForwardCache {
  int steps = 0;
  std::uint64_t params_fingerprint = 0;
  std::vector<LayerTrace> layers;
  std::vector<MlpTrace> readout;    // per output position
  std::vector<Matrix> predictions;  // per output position
};

struct SequenceOutput {
  std::vector<Matrix> embeddings;   // per output position, N x F_L
  std::vector<Matrix> predictions;  // per output position, N x D_out
  ForwardCache cache;
};

// Runs the network over inputs[0..M) (oldest first). Output position p
// (0-based) corresponds to input time receptive_field()-1+p and uses only
// inputs up to that time.
SequenceOutput forward_sequence(const NetworkParams& params, const Matrix& cov, std::span<const Matrix> inputs);

// Gradient of sum_p <d_predictions[p], prediction_p> with respect to every
// parameter. The covariance is treated as a constant.
NetworkParams backward_sequence(const NetworkParams& params, const ForwardCache& cache, const Matrix& cov,
                                std::span<const Matrix> d_predictions);

struct ForwardResult {
  Matrix embedding;
  Matrix prediction;
  ForwardCache cache;
};

// Single-window forward; window.frames[0] is the newest frame and the window
// must span the receptive field.
ForwardResult forward(const NetworkParams& params, const Matrix& cov, const SignalWindow& window);

// Gradient of mse_loss(prediction, target) for a single-window cache.
NetworkParams backward(const NetworkParams& params, const ForwardCache& cache, const Matrix& cov,
                       const Matrix& target);

double mse_loss(const Matrix& prediction, const Matrix& target);
Matrix mse_gradient(const Matrix& prediction, const Matrix& target);

std::uint64_t fingerprint(const NetworkParams& params);

}  // namespace stvnn
