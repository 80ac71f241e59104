#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "midpc/nn/parameters.hpp"

namespace midpc::nn {

struct AdamConfig {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<ad::Tensor> m;
  std::vector<ad::Tensor> v;
  std::int64_t t = 0;

  static AdamState for_store(const ParameterStore& store);
};

/// Where an update happened; echoed in diagnostics on failure.
struct StepContext {
  long epoch = -1;
  long batch = -1;
};

/// One bias-corrected Adam update. Throws NumericalError (naming epoch, batch
/// and parameter) if any gradient entry is non-finite; nothing is modified in
/// that case.
void adam_step(ParameterStore& params, std::span<const ad::Tensor> grads, AdamState& state,
               const AdamConfig& config, StepContext where = {});

}  // namespace midpc::nn
