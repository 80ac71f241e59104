#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

#include "midpc/nn/adam.hpp"
#include "midpc/plant/scenario.hpp"
#include "midpc/policy/policy.hpp"
#include "midpc/trainer/loss.hpp"
#include "midpc/util/errors.hpp"

namespace midpc::trainer {

/// A batch of scenarios in tensor form.
struct Batch {
  ad::Tensor x0;  // batch x n_x
  ad::Tensor d;   // batch x (N n_d), row-major over (step, channel)
  std::vector<std::size_t> index;  // dataset positions, for diagnostics

  std::size_t size() const { return x0.rows(); }
};

Batch make_batch(const plant::Dataset& data, std::span<const std::size_t> indices);
Batch make_batch(const plant::Dataset& data);

/// Per-step records; x has N+1 entries, the rest N. Each entry is batch x width.
struct RolloutTrace {
  std::vector<ad::Tensor> x;
  std::vector<ad::Tensor> u;
  std::vector<ad::Tensor> delta;
  std::vector<ad::Tensor> relaxed;
};

struct RolloutOptions {
  nn::Mode mode = nn::Mode::Train;
  rounding::Forward forward = rounding::Forward::Discrete;
  /// Replace the integer input by 0 (continuous-only rollout).
  bool disconnect_integer = false;
  bool keep_trace = false;
};

struct RolloutResult {
  /// Sum over the batch of per-sample losses, divided by `normalizer`.
  ad::Var loss;
  /// Per-sample means.
  LossTerms terms;
  std::optional<RolloutTrace> trace;
};

/// N-step closed-loop rollout: at step k the policy sees x_k and the
/// disturbance window shifted left by k with zero padding.
RolloutResult rollout_loss(ad::Tape& tape, const nn::Binding& params, const policy::Policy& policy,
                           const plant::Benchmark& bench, const Batch& batch, Rng& rng,
                           const RolloutOptions& options, double normalizer);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double dev_loss = 0.0;
  std::size_t bad_count = 0;
  double seconds = 0.0;
};

struct TrainConfig {
  double learning_rate = 3e-4;
  std::size_t batch_size = 2000;
  std::size_t max_epochs = 1000;
  std::size_t patience = 80;
  /// Samples per tape; bounds memory. Gradients are reduced in shard order.
  std::size_t shard_size = 250;
  std::size_t workers = 1;
  std::size_t dev_chunk = 1000;
  double min_improvement = 1e-8;
  /// Global gradient-norm clip; 0 disables.
  double grad_clip = 0.0;
  std::uint64_t seed = 0;
  std::function<void(const EpochRecord&)> on_epoch;

  void validate() const;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  /// Dev loss of the untrained policy.
  double initial_dev_loss = 0.0;
  double best_dev_loss = 0.0;
  std::size_t best_epoch = 0;
  bool stopped_early = false;
  double seconds = 0.0;
};

/// Eval-mode mean loss over a dataset (no dropout, no noise, no tape).
LossTerms evaluate_loss(const policy::Policy& policy, const plant::Benchmark& bench,
                        const plant::Dataset& data, std::size_t chunk = 1000);

/// Mini-batch Adam with dev-set early stopping. On return the policy holds the
/// best-dev parameters. Throws TrainingDiverged (after restoring the best
/// parameters) when the dev loss becomes non-finite.
TrainResult train(policy::Policy& policy, const plant::Benchmark& bench,
                  const plant::Dataset& train_set, const plant::Dataset& dev_set,
                  const TrainConfig& config);

class TrainingDiverged : public NumericalError {
 public:
  TrainingDiverged(const std::string& what, TrainResult partial)
      : NumericalError(what), partial_(std::move(partial)) {}
  const TrainResult& partial() const { return partial_; }

 private:
  TrainResult partial_;
};

void write_history_csv(std::ostream& out, const std::vector<EpochRecord>& history);

struct GradientCheck {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  double loss = 0.0;
};

/// Compares reverse-mode gradients of the surrogate-forward rollout against
/// central differences on `count` randomly chosen parameter scalars.
GradientCheck surrogate_gradient_check(const policy::Policy& policy, const plant::Benchmark& bench,
                                       const plant::Dataset& data, std::size_t count,
                                       std::uint64_t seed, bool disconnect_integer = false,
                                       double eps = 1e-6);

}  // namespace midpc::trainer
