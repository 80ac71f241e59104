#include <algorithm>
#include <cmath>

#include "midpc/autodiff/ops.hpp"
#include "midpc/trainer/trainer.hpp"

namespace midpc::trainer {
namespace {

double surrogate_loss(const policy::Policy& policy, const nn::ParameterStore& store,
                      const plant::Benchmark& bench, const Batch& batch, bool disconnect) {
  ad::Tape tape(false);
  nn::Binding params(tape, store);
  Rng unused(0);
  RolloutOptions options;
  options.mode = nn::Mode::Eval;
  options.forward = rounding::Forward::Surrogate;
  options.disconnect_integer = disconnect;
  const auto r = rollout_loss(tape, params, policy, bench, batch, unused, options,
                              static_cast<double>(batch.size()));
  return tape.value(r.loss).item();
}

}  // namespace

GradientCheck surrogate_gradient_check(const policy::Policy& policy, const plant::Benchmark& bench,
                                       const plant::Dataset& data, std::size_t count,
                                       std::uint64_t seed, bool disconnect_integer, double eps) {
  const Batch batch = make_batch(data);

  ad::Tape tape;
  nn::Binding params(tape, policy.parameters());
  Rng unused(0);
  RolloutOptions options;
  options.mode = nn::Mode::Eval;
  options.forward = rounding::Forward::Surrogate;
  options.disconnect_integer = disconnect_integer;
  const auto r = rollout_loss(tape, params, policy, bench, batch, unused, options,
                              static_cast<double>(batch.size()));
  const auto grads = params.collect(ad::backward(tape, r.loss));

  // Flat (tensor, element) addresses of every scalar, sampled without replacement.
  std::vector<std::pair<std::size_t, std::size_t>> all;
  double scale = 0.0;
  for (std::size_t i = 0; i < grads.size(); ++i)
    for (std::size_t k = 0; k < grads[i].size(); ++k) {
      all.emplace_back(i, k);
      scale = std::max(scale, std::abs(grads[i][k]));
    }
  Rng rng(seed);
  const std::size_t n = std::min(count, all.size());
  for (std::size_t j = 0; j < n; ++j) {
    const auto pick = static_cast<std::size_t>(
        rng.uniform_int(static_cast<std::int64_t>(j), static_cast<std::int64_t>(all.size() - 1)));
    std::swap(all[j], all[pick]);
  }

  // Entries far below the largest gradient are compared on an absolute
  // scale, where finite-difference round-off would otherwise dominate.
  const double floor = 1e-6 * std::max(scale, 1e-12);
  GradientCheck check;
  check.loss = tape.value(r.loss).item();
  check.checked = n;
  nn::ParameterStore work = policy.parameters();
  for (std::size_t j = 0; j < n; ++j) {
    const auto [i, k] = all[j];
    double& slot = work.mutable_value(i)[k];
    const double orig = slot;
    slot = orig + eps;
    const double up = surrogate_loss(policy, work, bench, batch, disconnect_integer);
    slot = orig - eps;
    const double down = surrogate_loss(policy, work, bench, batch, disconnect_integer);
    slot = orig;
    const double numeric = (up - down) / (2.0 * eps);
    const double analytic = grads[i][k];
    const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
    check.max_relative_error = std::max(check.max_relative_error, std::abs(analytic - numeric) / denom);
  }
  return check;
}

}  // namespace midpc::trainer
