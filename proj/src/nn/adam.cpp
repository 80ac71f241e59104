#include "midpc/nn/adam.hpp"

#include <cmath>
#include <string>

#include "midpc/util/errors.hpp"

namespace midpc::nn {

AdamState AdamState::for_store(const ParameterStore& store) {
  AdamState state;
  for (std::size_t i = 0; i < store.size(); ++i) {
    state.m.emplace_back(store.value(i).shape(), 0.0);
    state.v.emplace_back(store.value(i).shape(), 0.0);
  }
  return state;
}

void adam_step(ParameterStore& params, std::span<const ad::Tensor> grads, AdamState& state,
               const AdamConfig& config, StepContext where) {
  if (grads.size() != params.size() || state.m.size() != params.size())
    throw ShapeError("adam: gradient/state count does not match parameter count");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!grads[i].same_shape(params.value(i)))
      throw ShapeError("adam: gradient shape mismatch for '" + params.name(i) + "'");
    if (!grads[i].all_finite())
      throw NumericalError("adam: non-finite gradient in '" + params.name(i) + "' at epoch " +
                           std::to_string(where.epoch) + ", batch " + std::to_string(where.batch));
  }

  ++state.t;
  const double bias1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.t));
  const double bias2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    double* w = params.mutable_value(i).raw();
    double* m = state.m[i].raw();
    double* v = state.v[i].raw();
    const double* g = grads[i].raw();
    for (std::size_t k = 0; k < grads[i].size(); ++k) {
      m[k] = config.beta1 * m[k] + (1.0 - config.beta1) * g[k];
      v[k] = config.beta2 * v[k] + (1.0 - config.beta2) * g[k] * g[k];
      const double m_hat = m[k] / bias1;
      const double v_hat = v[k] / bias2;
      w[k] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.eps);
    }
  }
}

}  // namespace midpc::nn
