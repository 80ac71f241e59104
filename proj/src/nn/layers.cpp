#include "midpc/nn/layers.hpp"

#include <cmath>

#include "midpc/util/errors.hpp"

namespace midpc::nn {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::Linear: return "linear";
    case Activation::Tanh: return "tanh";
    case Activation::Selu: return "selu";
  }
  return "unknown";
}

std::string to_string(Norm n) {
  switch (n) {
    case Norm::None: return "none";
    case Norm::Plain: return "plain";
    case Norm::Affine: return "affine";
  }
  return "unknown";
}

Norm parse_norm(const std::string& name) {
  if (name == "none") return Norm::None;
  if (name == "plain") return Norm::Plain;
  if (name == "affine") return Norm::Affine;
  throw ConfigError("unknown layer norm style '" + name + "' (expected none, plain or affine)");
}

DenseLayer DenseLayer::create(ParameterStore& store, const std::string& prefix, std::size_t in,
                              std::size_t out, Activation activation, Norm norm, Rng& rng,
                              Init init) {
  if (in == 0 || out == 0) throw ConfigError("dense layer '" + prefix + "': zero width");
  ad::Tensor weight = ad::Tensor::matrix(out, in);
  if (init == Init::Default) {
    if (activation == Activation::Selu) {
      const double stddev = 1.0 / std::sqrt(static_cast<double>(in));
      for (double& w : weight.data()) w = rng.normal(0.0, stddev);
    } else {
      const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
      for (double& w : weight.data()) w = rng.uniform(-limit, limit);
    }
  }
  DenseLayer layer;
  layer.in = in;
  layer.out = out;
  layer.activation = activation;
  layer.weight = store.add(prefix + ".weight", std::move(weight));
  layer.bias = store.add(prefix + ".bias", ad::Tensor::vector(std::vector<double>(out, 0.0)));
  if (norm != Norm::None) {
    LayerNormParams params;
    params.affine = norm == Norm::Affine;
    if (params.affine) {
      params.gain =
          store.add(prefix + ".norm.gain", ad::Tensor::vector(std::vector<double>(out, 1.0)));
      params.offset =
          store.add(prefix + ".norm.offset", ad::Tensor::vector(std::vector<double>(out, 0.0)));
    }
    layer.norm = params;
  }
  return layer;
}

ad::Var activate(ad::Tape& tape, Activation activation, ad::Var x) {
  switch (activation) {
    case Activation::Tanh: return ad::tanh(tape, x);
    case Activation::Selu: return ad::selu(tape, x);
    case Activation::Linear: return x;
  }
  return x;
}

ad::Var layer_norm(ad::Tape& tape, const Binding& params, const LayerNormParams& norm, ad::Var x) {
  if (norm.affine) return ad::layer_norm(tape, x, params[norm.gain], params[norm.offset], norm.eps);
  const std::size_t width = tape.value(x).cols();
  const ad::Var ones = tape.constant(ad::Tensor::vector(std::vector<double>(width, 1.0)));
  const ad::Var zeros = tape.constant(ad::Tensor::vector(std::vector<double>(width, 0.0)));
  return ad::layer_norm(tape, x, ones, zeros, norm.eps);
}

ad::Var dense_forward(ad::Tape& tape, const Binding& params, const DenseLayer& layer, ad::Var x) {
  if (tape.value(x).cols() != layer.in)
    throw ShapeError("dense: input width " + std::to_string(tape.value(x).cols()) +
                     " does not match layer input " + std::to_string(layer.in));
  ad::Var z = ad::affine(tape, x, params[layer.weight], params[layer.bias]);
  if (layer.norm) z = layer_norm(tape, params, *layer.norm, z);
  return activate(tape, layer.activation, z);
}

ad::Var dropout(ad::Tape& tape, ad::Var x, double p, Mode mode, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw ConfigError("dropout: probability must lie in [0, 1)");
  if (mode == Mode::Eval || p == 0.0) return x;
  ad::Tensor mask(tape.value(x).shape());
  const double keep_scale = 1.0 / (1.0 - p);
  for (double& m : mask.data()) m = rng.uniform() < p ? 0.0 : keep_scale;
  return ad::apply_mask(tape, x, std::move(mask));
}

}  // namespace midpc::nn
