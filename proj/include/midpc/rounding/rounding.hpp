#pragma once

#include <string>
#include <vector>

#include "midpc/autodiff/tape.hpp"
#include "midpc/nn/layers.hpp"
#include "midpc/util/rng.hpp"

namespace midpc::rounding {

enum class Strategy { SigmoidSte, SoftmaxSte, LearnableThreshold };

std::string to_string(Strategy s);
/// Accepts sigmoid_ste, softmax_ste, learnable_threshold.
Strategy parse_strategy(const std::string& name);

/// Discrete: exact integers forward, surrogate gradient backward.
/// Surrogate: the smooth surrogate itself is used forward, so that the
/// reverse-mode gradient can be checked against finite differences.
enum class Forward { Discrete, Surrogate };

using FeasibleSets = std::vector<std::vector<int>>;

struct SigmoidSteConfig {
  double eta = 10.0;
  double threshold = 0.5;
  double clip_lo = -0.5;
  double clip_hi = 3.5;

  void validate(const FeasibleSets& feasible) const;
};

struct GumbelSoftmaxConfig {
  double tau = 0.5;
  bool noise_enabled = true;

  void validate(const FeasibleSets& feasible) const;
};

struct LearnableThresholdConfig {
  double eta = 10.0;
  bool correction_enabled = true;

  void validate(const FeasibleSets& feasible) const;
};

/// Round half away from zero.
double round_half_away(double y);

/// eta * s * (1 - s) with s = sigmoid(eta * (y - delta - threshold)).
double sigmoid_ste_multiplier(double y, double delta, double eta, double threshold);

/// y: batch x n_delta relaxed outputs. Forward: clip, round half away
/// from zero, clamp into [min A_j, max A_j].
ad::Var sigmoid_ste(ad::Tape& tape, ad::Var y, const SigmoidSteConfig& config,
                    const FeasibleSets& feasible, Forward forward = Forward::Discrete);

struct SoftmaxOutput {
  ad::Var delta;
  /// batch x sum(L_j) soft probabilities (noisy in train mode).
  ad::Var probabilities;
};

/// logits: batch x sum(L_j), the scores of integer input j occupying a
/// contiguous block of L_j columns. Logits are used directly as log-scores.
/// Noise is drawn from `rng` only in train mode with noise enabled.
SoftmaxOutput gumbel_softmax_ste(ad::Tape& tape, ad::Var logits, const FeasibleSets& feasible,
                                 const GumbelSoftmaxConfig& config, nn::Mode mode, Rng& rng,
                                 Forward forward = Forward::Discrete);

/// Gumbel(0, 1) samples, -log(-log U) with U clamped to [1e-12, 1 - 1e-12].
ad::Tensor gumbel_sample(Rng& rng, std::vector<std::size_t> shape);

struct ThresholdOutput {
  ad::Var delta;
  /// clip(y + q) into [min A_j, max A_j].
  ad::Var corrected;
  /// sigmoid(threshold_logit).
  ad::Var threshold;
};

/// y, q, threshold_logit: batch x n_delta. The fractional part of the
/// corrected value is compared against the threshold; the comparison borrows
/// the sigmoid STE gradient with respect to both operands.
ThresholdOutput learnable_threshold(ad::Tape& tape, ad::Var y, ad::Var q, ad::Var threshold_logit,
                                    const FeasibleSets& feasible,
                                    const LearnableThresholdConfig& config,
                                    Forward forward = Forward::Discrete);

}  // namespace midpc::rounding
