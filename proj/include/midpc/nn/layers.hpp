#pragma once

#include <optional>
#include <string>

#include "midpc/autodiff/ops.hpp"
#include "midpc/nn/parameters.hpp"
#include "midpc/util/rng.hpp"

namespace midpc::nn {

enum class Activation { Linear, Tanh, Selu };
enum class Mode { Train, Eval };

/// Affine: layer norm with trainable gain and offset. Plain: normalization
/// only. None: no layer norm.
enum class Norm { None, Plain, Affine };

std::string to_string(Activation a);
std::string to_string(Norm n);
Norm parse_norm(const std::string& name);

enum class Init {
  /// Xavier-uniform for tanh/linear, LeCun-normal for SELU.
  Default,
  /// All-zero weights and bias.
  Zero,
};

struct LayerNormParams {
  bool affine = true;
  /// Store indices; meaningful only when affine.
  std::size_t gain = 0;
  std::size_t offset = 0;
  double eps = 1e-5;
};

/// activation(layer_norm(x W^T + b)) when a norm is attached, otherwise
/// activation(x W^T + b).
struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  Activation activation = Activation::Linear;
  std::size_t weight = 0;
  std::size_t bias = 0;
  std::optional<LayerNormParams> norm;

  static DenseLayer create(ParameterStore& store, const std::string& prefix, std::size_t in,
                           std::size_t out, Activation activation, Norm norm, Rng& rng,
                           Init init = Init::Default);
};

ad::Var dense_forward(ad::Tape& tape, const Binding& params, const DenseLayer& layer, ad::Var x);

ad::Var layer_norm(ad::Tape& tape, const Binding& params, const LayerNormParams& norm, ad::Var x);

ad::Var activate(ad::Tape& tape, Activation activation, ad::Var x);

/// Inverted dropout: in train mode zeroes entries with probability p and
/// scales survivors by 1/(1-p); identity in eval mode or when p == 0.
/// Throws ConfigError unless 0 <= p < 1.
ad::Var dropout(ad::Tape& tape, ad::Var x, double p, Mode mode, Rng& rng);

}  // namespace midpc::nn
