#include "dslrec/optim.hpp"

#include <cmath>

#include "dslrec/matrix.hpp"

namespace dslrec {

void Adam::step(std::span<double> params, std::span<const double> grad, AdamState& state) const {
  if (params.size() != grad.size()) throw Error("adam: parameter and gradient sizes differ");
  if (state.m.size() != params.size()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
    state.steps = 0;
  }
  ++state.steps;
  const double t = static_cast<double>(state.steps);
  const double bias1 = 1.0 - std::pow(config_.beta1, t);
  const double bias2 = 1.0 - std::pow(config_.beta2, t);
  const double lr = config_.learning_rate;
  const double shrink = 1.0 - lr * config_.weight_decay;
  for (std::size_t k = 0; k < params.size(); ++k) {
    const double g = grad[k];
    state.m[k] = config_.beta1 * state.m[k] + (1.0 - config_.beta1) * g;
    state.v[k] = config_.beta2 * state.v[k] + (1.0 - config_.beta2) * g * g;
    const double m_hat = state.m[k] / bias1;
    const double v_hat = state.v[k] / bias2;
    params[k] *= shrink;
    params[k] -= lr * m_hat / (std::sqrt(v_hat) + config_.epsilon);
  }
}

}  // namespace dslrec
