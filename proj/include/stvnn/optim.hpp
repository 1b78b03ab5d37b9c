#pragma once

#include "stvnn/network.hpp"

namespace stvnn {

enum class OptimizerKind { Adam, Sgd };

// theta <- theta - eta * g
NetworkParams sgd_step(NetworkParams params, const NetworkParams& grads, double eta);
void sgd_step_in_place(NetworkParams& params, const NetworkParams& grads, double eta);

struct AdamState {
  NetworkParams first_moment;
  NetworkParams second_moment;
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

AdamState adam_init(const NetworkParams& params, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

// Bias-corrected Adam update.
void adam_step_in_place(NetworkParams& params, const NetworkParams& grads, AdamState& state, double eta);
std::pair<NetworkParams, AdamState> adam_step(NetworkParams params, const NetworkParams& grads, AdamState state,
                                              double eta);

}  // namespace stvnn
