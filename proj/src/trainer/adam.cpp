// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "mtfl/error.hpp"
#include "mtfl/trainer.hpp"

namespace mtfl {

AdamState AdamState::zeros_like(const NamedTensors& params) {
  return AdamState{params.zeros_like(), params.zeros_like(), 0};
}

void adam_step(NamedTensors& params, const NamedTensors& grads, AdamState& state,
               const TrainConfig& cfg) {
  if (!params.same_layout(grads)) throw ShapeError("adam_step: gradients do not match parameters");
  if (!params.same_layout(state.first_moment) || !params.same_layout(state.second_moment)) {
    throw ShapeError("adam_step: optimizer state does not match parameters");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(cfg.beta1, t);
  const double correction2 = 1.0 - std::pow(cfg.beta2, t);

  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& p = params.tensor(i);
    Matrix& m = state.first_moment.tensor(i);
    Matrix& v = state.second_moment.tensor(i);
    const Matrix& g = grads.tensor(i);
    const bool decay = !is_bias(params.name(i)) && cfg.weight_decay != 0.0;
    for (std::size_t e = 0; e < p.size(); ++e) {
      m[e] = cfg.beta1 * m[e] + (1.0 - cfg.beta1) * g[e];
      v[e] = cfg.beta2 * v[e] + (1.0 - cfg.beta2) * g[e] * g[e];
      const double m_hat = m[e] / correction1;
      const double v_hat = v[e] / correction2;
      p[e] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.adam_eps);
      if (decay) p[e] -= cfg.learning_rate * cfg.weight_decay * p[e];
    }
  }
}

}  // namespace mtfl
