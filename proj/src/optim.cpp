#include "stvnn/optim.hpp"

#include <cmath>

namespace stvnn {

namespace {
void check_finite(const NetworkParams& grads) {
  if (!grads.all_finite()) throw NumericalError("optimizer: non-finite gradient");
}
}  // namespace

void sgd_step_in_place(NetworkParams& params, const NetworkParams& grads, double eta) {
  check_finite(grads);
  zip_blocks(params, grads, [eta](Matrix& p, const Matrix& g) { p.noalias() -= eta * g; });
}

NetworkParams sgd_step(NetworkParams params, const NetworkParams& grads, double eta) {
  sgd_step_in_place(params, grads, eta);
  return params;
}

AdamState adam_init(const NetworkParams& params, double beta1, double beta2, double eps) {
  AdamState s;
  s.first_moment = params.zeros_like();
  s.second_moment = params.zeros_like();
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.eps = eps;
  return s;
}

void adam_step_in_place(NetworkParams& params, const NetworkParams& grads, AdamState& state, double eta) {
  check_finite(grads);
  state.step += 1;
  const double b1 = state.beta1, b2 = state.beta2, eps = state.eps;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));

  std::vector<Matrix*> m, v;
  state.first_moment.for_each_block([&](Matrix& x) { m.push_back(&x); });
  state.second_moment.for_each_block([&](Matrix& x) { v.push_back(&x); });
  std::size_t i = 0;
  zip_blocks(params, grads, [&](Matrix& p, const Matrix& g) {
    Matrix& mi = *m.at(i);
    Matrix& vi = *v.at(i);
    ++i;
    mi = b1 * mi + (1.0 - b1) * g;
    vi = b2 * vi + (1.0 - b2) * g.cwiseProduct(g);
    p.array() -= eta * (mi.array() / c1) / ((vi.array() / c2).sqrt() + eps);
  });
}

std::pair<NetworkParams, AdamState> adam_step(NetworkParams params, const NetworkParams& grads, AdamState state,
                                              double eta) {
  adam_step_in_place(params, grads, state, eta);
  return {std::move(params), std::move(state)};
}

}  // namespace stvnn
