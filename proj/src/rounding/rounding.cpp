#include "midpc/rounding/rounding.hpp"

#include <algorithm>
#include <cmath>

#include "midpc/autodiff/ops.hpp"
#include "midpc/util/errors.hpp"

namespace midpc::rounding {
namespace {

void require_evenly_spaced(const FeasibleSets& feasible, const char* who) {
  if (feasible.empty()) throw ConfigError(std::string(who) + ": no integer inputs");
  for (const auto& set : feasible) {
    if (set.size() < 2) throw ConfigError(std::string(who) + ": feasible set needs two values");
    for (std::size_t i = 1; i < set.size(); ++i)
      if (set[i] != set[i - 1] + 1)
        throw ConfigError(std::string(who) + ": evenly spaced integers required");
  }
}

void require_width(const ad::Tape& tape, ad::Var v, std::size_t width, const char* who) {
  if (tape.value(v).cols() != width)
    throw ShapeError(std::string(who) + ": expected " + std::to_string(width) + " columns, got " +
                     std::to_string(tape.value(v).cols()));
}

// Column j of a batch x n matrix as its own batch x 1 node.
ad::Var column(ad::Tape& tape, ad::Var x, std::size_t j) {
  if (tape.value(x).cols() == 1) return x;
  return ad::slice_cols(tape, x, j, 1);
}

ad::Var join(ad::Tape& tape, const std::vector<ad::Var>& parts) {
  return parts.size() == 1 ? parts.front() : ad::concat_cols(tape, parts);
}

}  // namespace

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::SigmoidSte: return "sigmoid_ste";
    case Strategy::SoftmaxSte: return "softmax_ste";
    case Strategy::LearnableThreshold: return "learnable_threshold";
  }
  return "unknown";
}

Strategy parse_strategy(const std::string& name) {
  if (name == "sigmoid_ste") return Strategy::SigmoidSte;
  if (name == "softmax_ste") return Strategy::SoftmaxSte;
  if (name == "learnable_threshold") return Strategy::LearnableThreshold;
  throw ConfigError("unknown rounding strategy '" + name +
                    "' (expected sigmoid_ste, softmax_ste or learnable_threshold)");
}

void SigmoidSteConfig::validate(const FeasibleSets& feasible) const {
  if (!(eta > 1.0)) throw ConfigError("sigmoid_ste: eta must exceed 1");
  if (!(clip_lo < clip_hi)) throw ConfigError("sigmoid_ste: clip_lo must be below clip_hi");
  require_evenly_spaced(feasible, "sigmoid_ste");
}

void GumbelSoftmaxConfig::validate(const FeasibleSets& feasible) const {
  if (!(tau > 0.0)) throw ConfigError("softmax_ste: temperature must be positive");
  if (feasible.empty()) throw ConfigError("softmax_ste: no integer inputs");
  for (const auto& set : feasible)
    if (set.size() < 2) throw ConfigError("softmax_ste: feasible set needs two values");
}

void LearnableThresholdConfig::validate(const FeasibleSets& feasible) const {
  if (!(eta > 1.0)) throw ConfigError("learnable_threshold: eta must exceed 1");
  require_evenly_spaced(feasible, "learnable_threshold");
}

double round_half_away(double y) { return std::round(y); }

double sigmoid_ste_multiplier(double y, double delta, double eta, double threshold) {
  const double s = ad::sigmoid(eta * (y - delta - threshold));
  return eta * s * (1.0 - s);
}

ad::Var sigmoid_ste(ad::Tape& tape, ad::Var y, const SigmoidSteConfig& config,
                    const FeasibleSets& feasible, Forward forward) {
  config.validate(feasible);
  require_width(tape, y, feasible.size(), "sigmoid_ste");
  const ad::Var clipped = ad::clip(tape, y, config.clip_lo, config.clip_hi);
  const ad::Tensor& yc = tape.value(clipped);
  const std::size_t nd = feasible.size();

  ad::Tensor rounded(yc.shape());
  for (std::size_t i = 0; i < yc.size(); ++i) {
    const auto& set = feasible[i % nd];
    rounded[i] = std::clamp(round_half_away(yc[i]), static_cast<double>(set.front()),
                            static_cast<double>(set.back()));
  }

  if (forward == Forward::Surrogate) {
    // rounded + sigmoid(eta (y - rounded - t)), rounded held constant.
    const ad::Var base = tape.constant(rounded);
    const ad::Var shift = tape.constant(ad::Tensor(yc.shape(), config.threshold));
    const ad::Var arg = ad::scale(tape, ad::sub(tape, ad::sub(tape, clipped, base), shift), config.eta);
    return ad::add(tape, base, ad::sigmoid(tape, arg));
  }

  const double eta = config.eta;
  const double t = config.threshold;
  return ad::custom_grad(tape, {clipped}, std::move(rounded), [eta, t](const ad::BackwardArgs& a) {
    if (!a.input_grads[0]) return;
    const ad::Tensor& x = a.input(0);
    ad::Tensor& g = *a.input_grads[0];
    for (std::size_t i = 0; i < x.size(); ++i)
      g[i] += a.grad[i] * sigmoid_ste_multiplier(x[i], a.value[i], eta, t);
  });
}

ad::Tensor gumbel_sample(Rng& rng, std::vector<std::size_t> shape) {
  ad::Tensor out(std::move(shape));
  for (double& v : out.data()) v = rng.gumbel();
  return out;
}

SoftmaxOutput gumbel_softmax_ste(ad::Tape& tape, ad::Var logits, const FeasibleSets& feasible,
                                 const GumbelSoftmaxConfig& config, nn::Mode mode, Rng& rng,
                                 Forward forward) {
  config.validate(feasible);
  std::size_t total = 0;
  for (const auto& set : feasible) total += set.size();
  require_width(tape, logits, total, "softmax_ste");
  const std::size_t batch = tape.value(logits).rows();

  ad::Var scores = logits;
  if (mode == nn::Mode::Train && config.noise_enabled && forward == Forward::Discrete)
    scores = ad::add(tape, scores, tape.constant(gumbel_sample(rng, {batch, total})));
  scores = ad::scale(tape, scores, 1.0 / config.tau);

  std::vector<ad::Var> probs, deltas;
  std::size_t offset = 0;
  for (const auto& set : feasible) {
    const std::size_t L = set.size();
    const ad::Var block =
        total == L ? scores : ad::slice_cols(tape, scores, offset, L);
    const ad::Var soft = ad::softmax(tape, block);
    ad::Tensor values = ad::Tensor::matrix(L, 1);
    for (std::size_t i = 0; i < L; ++i) values[i] = set[i];
    const ad::Var a = tape.constant(values);

    ad::Var selector = soft;
    if (forward == Forward::Discrete) {
      const ad::Tensor& s = tape.value(soft);
      ad::Tensor one_hot(s.shape(), 0.0);
      for (std::size_t b = 0; b < batch; ++b) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < L; ++i)
          if (s(b, i) > s(b, best)) best = i;
        one_hot(b, best) = 1.0;
      }
      selector = ad::custom_grad(tape, {soft}, std::move(one_hot), [](const ad::BackwardArgs& g) {
        if (!g.input_grads[0]) return;
        ad::Tensor& dst = *g.input_grads[0];
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g.grad[i];
      });
    }
    probs.push_back(soft);
    deltas.push_back(ad::matmul(tape, selector, a));
    offset += L;
  }
  return {join(tape, deltas), join(tape, probs)};
}

ThresholdOutput learnable_threshold(ad::Tape& tape, ad::Var y, ad::Var q, ad::Var threshold_logit,
                                    const FeasibleSets& feasible,
                                    const LearnableThresholdConfig& config, Forward forward) {
  config.validate(feasible);
  const std::size_t nd = feasible.size();
  require_width(tape, y, nd, "learnable_threshold");
  require_width(tape, q, nd, "learnable_threshold");
  require_width(tape, threshold_logit, nd, "learnable_threshold");

  const ad::Var shifted = config.correction_enabled ? ad::add(tape, y, q) : y;
  std::vector<ad::Var> parts;
  for (std::size_t j = 0; j < nd; ++j)
    parts.push_back(ad::clip(tape, column(tape, shifted, j), feasible[j].front(),
                             feasible[j].back()));
  const ad::Var corrected = join(tape, parts);
  const ad::Var threshold = ad::sigmoid(tape, threshold_logit);

  const ad::Tensor& yc = tape.value(corrected);
  const ad::Tensor& t = tape.value(threshold);
  ad::Tensor floor_part(yc.shape());
  for (std::size_t i = 0; i < yc.size(); ++i) floor_part[i] = std::floor(yc[i]);
  const ad::Var base = tape.constant(floor_part);
  const ad::Var frac = ad::sub(tape, corrected, base);

  if (forward == Forward::Surrogate) {
    const ad::Var arg = ad::scale(tape, ad::sub(tape, frac, threshold), config.eta);
    return {ad::add(tape, base, ad::sigmoid(tape, arg)), corrected, threshold};
  }

  const ad::Tensor& f = tape.value(frac);
  // Rounding up an integral value is a no-op (ceil == floor), which also
  // keeps the top of the range feasible when the threshold underflows to 0.
  ad::Tensor up(yc.shape());
  for (std::size_t i = 0; i < yc.size(); ++i) up[i] = f[i] > 0.0 && f[i] >= t[i] ? 1.0 : 0.0;
  const double eta = config.eta;
  const ad::Var step = ad::custom_grad(
      tape, {frac, threshold}, std::move(up), [eta](const ad::BackwardArgs& a) {
        const ad::Tensor& fr = a.input(0);
        const ad::Tensor& th = a.input(1);
        for (std::size_t i = 0; i < fr.size(); ++i) {
          const double m = a.grad[i] * sigmoid_ste_multiplier(fr[i], 0.0, eta, th[i]);
          if (a.input_grads[0]) (*a.input_grads[0])[i] += m;
          if (a.input_grads[1]) (*a.input_grads[1])[i] -= m;
        }
      });
  return {ad::add(tape, base, step), corrected, threshold};
}

}  // namespace midpc::rounding
