#include "midpc/policy/policy.hpp"

#include <fstream>
#include <map>

#include "midpc/autodiff/ops.hpp"
#include "midpc/util/errors.hpp"

namespace midpc::policy {

using rounding::Strategy;

PolicyDims PolicyDims::from(const plant::Benchmark& b) {
  PolicyDims d;
  d.n_x = static_cast<std::size_t>(b.model.n_x());
  d.n_u = static_cast<std::size_t>(b.model.n_u());
  d.n_d = static_cast<std::size_t>(b.model.n_d());
  d.feasible = b.constraints.feasible_integers;
  return d;
}

std::size_t PolicyConfig::resolved_width() const {
  if (width != 0) return width;
  return strategy == Strategy::LearnableThreshold ? 95 : 120;
}

void PolicyConfig::validate(const PolicyDims& dims) const {
  if (horizon == 0) throw ConfigError("policy: horizon must be at least 1");
  if (u_hidden_layers == 0 || delta_hidden_layers == 0)
    throw ConfigError("policy: each head needs at least one hidden layer");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("policy: dropout must lie in [0, 1)");
  if (dims.n_x == 0 || dims.n_u == 0 || dims.n_d == 0 || dims.feasible.empty())
    throw ConfigError("policy: empty problem dimensions");
  switch (strategy) {
    case Strategy::SigmoidSte: sigmoid.validate(dims.feasible); break;
    case Strategy::SoftmaxSte: softmax.validate(dims.feasible); break;
    case Strategy::LearnableThreshold: threshold.validate(dims.feasible); break;
  }
}

nlohmann::json PolicyConfig::to_json() const {
  return {{"strategy", rounding::to_string(strategy)},
          {"horizon", horizon},
          {"width", resolved_width()},
          {"u_hidden_layers", u_hidden_layers},
          {"delta_hidden_layers", delta_hidden_layers},
          {"dropout", dropout},
          {"norm", nn::to_string(norm)},
          {"zero_output", zero_output},
          {"seed", seed},
          {"eta", sigmoid.eta},
          {"rounding_threshold", sigmoid.threshold},
          {"clip", {sigmoid.clip_lo, sigmoid.clip_hi}},
          {"tau", softmax.tau},
          {"gumbel_noise", softmax.noise_enabled},
          {"lt_eta", threshold.eta},
          {"lt_correction", threshold.correction_enabled}};
}

PolicyConfig PolicyConfig::from_json(const nlohmann::json& j) {
  PolicyConfig c;
  try {
    c.strategy = rounding::parse_strategy(j.at("strategy").get<std::string>());
    c.horizon = j.at("horizon").get<std::size_t>();
    c.width = j.value("width", std::size_t{0});
    c.u_hidden_layers = j.value("u_hidden_layers", c.u_hidden_layers);
    c.delta_hidden_layers = j.value("delta_hidden_layers", c.delta_hidden_layers);
    c.dropout = j.value("dropout", c.dropout);
    c.norm = nn::parse_norm(j.value("norm", std::string("affine")));
    c.zero_output = j.value("zero_output", false);
    c.seed = j.value("seed", std::uint64_t{0});
    c.sigmoid.eta = j.value("eta", c.sigmoid.eta);
    c.sigmoid.threshold = j.value("rounding_threshold", c.sigmoid.threshold);
    if (j.contains("clip")) {
      c.sigmoid.clip_lo = j["clip"].at(0).get<double>();
      c.sigmoid.clip_hi = j["clip"].at(1).get<double>();
    }
    c.softmax.tau = j.value("tau", c.softmax.tau);
    c.softmax.noise_enabled = j.value("gumbel_noise", c.softmax.noise_enabled);
    c.threshold.eta = j.value("lt_eta", c.threshold.eta);
    c.threshold.correction_enabled = j.value("lt_correction", c.threshold.correction_enabled);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("policy config: ") + e.what());
  }
  return c;
}

Policy::Policy(PolicyConfig config, PolicyDims dims) : config_(std::move(config)), dims_(std::move(dims)) {
  config_.validate(dims_);
  config_.width = config_.resolved_width();
  Rng rng(derive_seed(config_.seed, 0x706f6c696379ULL));
  const std::size_t n_delta = dims_.n_delta();
  std::size_t delta_width = n_delta;
  if (config_.strategy == Strategy::SoftmaxSte) {
    delta_width = 0;
    for (const auto& set : dims_.feasible) delta_width += set.size();
  }
  if (config_.strategy == Strategy::LearnableThreshold) {
    phi1_ = build("phi1", input_width(), dims_.n_u, n_delta, rng);
    // phi2 sees xi together with phi1's relaxed continuous and integer outputs.
    phi2_ = build("phi2", input_width() + dims_.n_u + n_delta, n_delta, n_delta, rng);
  } else {
    phi1_ = build("", input_width(), dims_.n_u, delta_width, rng);
  }
}

ThreeComponentNet Policy::build(const std::string& prefix, std::size_t in, std::size_t u_out,
                                std::size_t delta_out, Rng& rng) {
  using nn::Activation;
  using nn::DenseLayer;
  const std::string p = prefix.empty() ? "" : prefix + ".";
  const bool is_phi2 = prefix == "phi2";
  const std::string u_name = is_phi2 ? "correction" : "u";
  const std::string d_name = is_phi2 ? "threshold" : "delta";
  const std::size_t w = config_.resolved_width();
  const nn::Init out_init = config_.zero_output ? nn::Init::Zero : nn::Init::Default;

  ThreeComponentNet net;
  net.lift = DenseLayer::create(params_, p + "lift", in, w, Activation::Tanh, config_.norm, rng);
  for (std::size_t i = 0; i < config_.u_hidden_layers; ++i)
    net.u_hidden.push_back(DenseLayer::create(params_, p + u_name + ".hidden" + std::to_string(i),
                                              w, w, Activation::Tanh, config_.norm, rng));
  net.u_out = DenseLayer::create(params_, p + u_name + ".out", w, u_out, Activation::Linear,
                                 nn::Norm::None, rng, out_init);
  for (std::size_t i = 0; i < config_.delta_hidden_layers; ++i)
    net.delta_hidden.push_back(DenseLayer::create(params_,
                                                  p + d_name + ".hidden" + std::to_string(i), w, w,
                                                  Activation::Selu, config_.norm, rng));
  net.delta_out = DenseLayer::create(params_, p + d_name + ".out", w, delta_out,
                                     Activation::Linear, nn::Norm::None, rng, out_init);
  return net;
}

ad::Var Policy::lift(ad::Tape& tape, const nn::Binding& p, const ThreeComponentNet& net,
                     ad::Var x) const {
  return nn::dense_forward(tape, p, net.lift, x);
}

ad::Var Policy::head(ad::Tape& tape, const nn::Binding& p,
                     const std::vector<nn::DenseLayer>& hidden, const nn::DenseLayer& out,
                     ad::Var h, double dropout, nn::Mode mode, Rng& rng) const {
  for (const auto& layer : hidden) {
    h = nn::dense_forward(tape, p, layer, h);
    h = nn::dropout(tape, h, dropout, mode, rng);
  }
  return nn::dense_forward(tape, p, out, h);
}

PolicyOutput Policy::forward(ad::Tape& tape, const nn::Binding& p, ad::Var xi, nn::Mode mode,
                             Rng& rng, rounding::Forward fwd) const {
  if (tape.value(xi).cols() != input_width())
    throw ShapeError("policy: xi has width " + std::to_string(tape.value(xi).cols()) +
                     ", expected " + std::to_string(input_width()));
  const ad::Var h = lift(tape, p, phi1_, xi);
  PolicyOutput out;
  // Dropout regularizes only the continuous-input path.
  out.u = head(tape, p, phi1_.u_hidden, phi1_.u_out, h, config_.dropout, mode, rng);
  out.relaxed = head(tape, p, phi1_.delta_hidden, phi1_.delta_out, h, 0.0, mode, rng);

  switch (config_.strategy) {
    case Strategy::SigmoidSte:
      out.delta = rounding::sigmoid_ste(tape, out.relaxed, config_.sigmoid, dims_.feasible, fwd);
      break;
    case Strategy::SoftmaxSte: {
      const auto s = rounding::gumbel_softmax_ste(tape, out.relaxed, dims_.feasible,
                                                  config_.softmax, mode, rng, fwd);
      out.delta = s.delta;
      out.probabilities = s.probabilities;
      break;
    }
    case Strategy::LearnableThreshold: {
      const ThreeComponentNet& net = *phi2_;
      const ad::Var in = ad::concat_cols(tape, {xi, out.u, out.relaxed});
      const ad::Var h2 = lift(tape, p, net, in);
      const ad::Var q = head(tape, p, net.u_hidden, net.u_out, h2, 0.0, mode, rng);
      const ad::Var logit = head(tape, p, net.delta_hidden, net.delta_out, h2, 0.0, mode, rng);
      const auto t = rounding::learnable_threshold(tape, out.relaxed, q, logit, dims_.feasible,
                                                   config_.threshold, fwd);
      out.delta = t.delta;
      out.correction = q;
      out.threshold = t.threshold;
      break;
    }
  }
  return out;
}

Policy::Action Policy::act(const std::vector<double>& xi) const {
  ad::Tape tape(false);
  nn::Binding p(tape, params_);
  Rng unused(0);
  const auto x = tape.constant(ad::Tensor({1, xi.size()}, xi));
  const auto out = forward(tape, p, x, nn::Mode::Eval, unused);
  const auto& u = tape.value(out.u);
  const auto& d = tape.value(out.delta);
  return {{u.data().begin(), u.data().end()}, {d.data().begin(), d.data().end()}};
}

std::vector<ParameterBreakdown> Policy::parameter_breakdown() const {
  static const std::map<std::string, std::string> kNames{{"lift", "lift"},
                                                         {"u", "u_head"},
                                                         {"delta", "delta_head"},
                                                         {"correction", "correction_head"},
                                                         {"threshold", "threshold_head"}};
  std::vector<ParameterBreakdown> out;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    std::string name = params_.name(i);
    std::string prefix;
    if (name.rfind("phi", 0) == 0) {
      prefix = name.substr(0, name.find('.') + 1);
      name = name.substr(prefix.size());
    }
    const std::string component = prefix + kNames.at(name.substr(0, name.find('.')));
    if (out.empty() || out.back().component != component) out.push_back({component, 0});
    out.back().count += params_.value(i).size();
  }
  return out;
}

nlohmann::json Policy::to_json() const {
  nlohmann::json feasible = dims_.feasible;
  return {{"format", "midpc-policy"},
          {"version", 1},
          {"config", config_.to_json()},
          {"dims", {{"n_x", dims_.n_x}, {"n_u", dims_.n_u}, {"n_d", dims_.n_d}, {"feasible", feasible}}},
          {"parameter_count", parameter_count()},
          {"parameters", params_.to_json()}};
}

Policy Policy::from_json(const nlohmann::json& j) {
  if (j.value("format", std::string()) != "midpc-policy")
    throw ConfigError("checkpoint: not a midpc-policy file");
  if (j.value("version", 0) != 1) throw ConfigError("checkpoint: unsupported version");
  PolicyDims dims;
  try {
    const auto& d = j.at("dims");
    dims.n_x = d.at("n_x").get<std::size_t>();
    dims.n_u = d.at("n_u").get<std::size_t>();
    dims.n_d = d.at("n_d").get<std::size_t>();
    dims.feasible = d.at("feasible").get<rounding::FeasibleSets>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("checkpoint dims: ") + e.what());
  }
  Policy policy(PolicyConfig::from_json(j.at("config")), std::move(dims));
  policy.params_.load_json(j.at("parameters"));
  return policy;
}

void Policy::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write checkpoint '" + path + "'");
  out << to_json().dump(1) << '\n';
  if (!out) throw IoError("write failed for '" + path + "'");
}

Policy Policy::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read checkpoint '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("checkpoint '" + path + "': " + e.what());
  }
  return from_json(j);
}

std::size_t count_parameters(const PolicyConfig& config, const PolicyDims& dims) {
  return Policy(config, dims).parameter_count();
}

}  // namespace midpc::policy
