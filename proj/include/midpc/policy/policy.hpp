#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "midpc/nn/layers.hpp"
#include "midpc/nn/parameters.hpp"
#include "midpc/plant/system.hpp"
#include "midpc/rounding/rounding.hpp"

namespace midpc::policy {

/// Problem dimensions the policy is built for.
struct PolicyDims {
  std::size_t n_x = 2;
  std::size_t n_u = 2;
  std::size_t n_d = 2;
  rounding::FeasibleSets feasible{{0, 1, 2, 3}};

  static PolicyDims from(const plant::Benchmark& b);
  std::size_t n_delta() const { return feasible.size(); }
  std::size_t n_xi(std::size_t horizon) const { return n_x + horizon * n_d; }
};

struct PolicyConfig {
  rounding::Strategy strategy = rounding::Strategy::SigmoidSte;
  std::size_t horizon = 10;
  /// 0 selects the strategy default: 120, or 95 for the learnable threshold.
  std::size_t width = 0;
  std::size_t u_hidden_layers = 2;
  std::size_t delta_hidden_layers = 2;
  double dropout = 0.1;
  nn::Norm norm = nn::Norm::Affine;
  /// Zero the output layers (u = 0, integer head output 0) at construction.
  bool zero_output = false;
  std::uint64_t seed = 0;

  rounding::SigmoidSteConfig sigmoid;
  rounding::GumbelSoftmaxConfig softmax;
  rounding::LearnableThresholdConfig threshold;

  std::size_t resolved_width() const;
  void validate(const PolicyDims& dims) const;
  nlohmann::json to_json() const;
  static PolicyConfig from_json(const nlohmann::json& j);
};

/// Lift f^(h), continuous head f^(u) and integer head f^(delta).
struct ThreeComponentNet {
  nn::DenseLayer lift;
  std::vector<nn::DenseLayer> u_hidden;
  nn::DenseLayer u_out;
  std::vector<nn::DenseLayer> delta_hidden;
  nn::DenseLayer delta_out;
};

struct PolicyOutput {
  ad::Var u;
  ad::Var delta;
  /// Raw integer-head output before rounding (logits for the softmax head).
  ad::Var relaxed;
  std::optional<ad::Var> probabilities;
  std::optional<ad::Var> correction;
  std::optional<ad::Var> threshold;
};

struct ParameterBreakdown {
  std::string component;
  std::size_t count = 0;
};

class Policy {
 public:
  Policy(PolicyConfig config, PolicyDims dims);

  const PolicyConfig& config() const { return config_; }
  const PolicyDims& dims() const { return dims_; }
  std::size_t input_width() const { return dims_.n_xi(config_.horizon); }

  nn::ParameterStore& parameters() { return params_; }
  const nn::ParameterStore& parameters() const { return params_; }

  /// xi: batch x n_xi. Dropout and Gumbel noise draw from `rng` in train mode only.
  PolicyOutput forward(ad::Tape& tape, const nn::Binding& params, ad::Var xi, nn::Mode mode,
                       Rng& rng, rounding::Forward forward = rounding::Forward::Discrete) const;

  /// One eval-mode decision for a single control-parameter vector.
  struct Action {
    std::vector<double> u;
    std::vector<double> delta;
  };
  Action act(const std::vector<double>& xi) const;

  std::size_t parameter_count() const { return params_.scalar_count(); }
  /// Trainable scalars per component (lift, u_head, delta_head, and for the
  /// learnable threshold phi2.lift, phi2.correction, phi2.threshold).
  std::vector<ParameterBreakdown> parameter_breakdown() const;

  nlohmann::json to_json() const;
  static Policy from_json(const nlohmann::json& j);
  void save(const std::string& path) const;
  static Policy load(const std::string& path);

 private:
  ThreeComponentNet build(const std::string& prefix, std::size_t in, std::size_t u_out,
                          std::size_t delta_out, Rng& rng);
  ad::Var lift(ad::Tape& tape, const nn::Binding& p, const ThreeComponentNet& net, ad::Var x) const;
  ad::Var head(ad::Tape& tape, const nn::Binding& p, const std::vector<nn::DenseLayer>& hidden,
               const nn::DenseLayer& out, ad::Var h, double dropout, nn::Mode mode, Rng& rng) const;

  PolicyConfig config_;
  PolicyDims dims_;
  nn::ParameterStore params_;
  ThreeComponentNet phi1_;
  std::optional<ThreeComponentNet> phi2_;
};

/// Trainable scalar count for an architecture, without keeping the policy.
std::size_t count_parameters(const PolicyConfig& config, const PolicyDims& dims);

}  // namespace midpc::policy
