#include "midpc/nn/parameters.hpp"

#include <numeric>

#include "midpc/util/errors.hpp"

namespace midpc::nn {

std::size_t ParameterStore::add(std::string name, ad::Tensor value) {
  if (find(name)) throw ConfigError("parameter store: duplicate name '" + name + "'");
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
  return values_.size() - 1;
}

std::optional<std::size_t> ParameterStore::find(const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return i;
  return std::nullopt;
}

std::size_t ParameterStore::scalar_count() const {
  return std::accumulate(values_.begin(), values_.end(), std::size_t{0},
                         [](std::size_t acc, const ad::Tensor& t) { return acc + t.size(); });
}

nlohmann::json ParameterStore::to_json() const {
  nlohmann::json out = nlohmann::json::array();
  for (std::size_t i = 0; i < values_.size(); ++i) {
    out.push_back({{"name", names_[i]},
                   {"shape", values_[i].shape()},
                   {"data", std::vector<double>(values_[i].data().begin(), values_[i].data().end())}});
  }
  return out;
}

void ParameterStore::load_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != values_.size())
    throw ConfigError("checkpoint: expected " + std::to_string(values_.size()) + " tensors");
  for (std::size_t i = 0; i < values_.size(); ++i) {
    const auto& entry = j[i];
    const auto name = entry.at("name").get<std::string>();
    if (name != names_[i])
      throw ConfigError("checkpoint: tensor " + std::to_string(i) + " is '" + name +
                        "', expected '" + names_[i] + "'");
    auto shape = entry.at("shape").get<std::vector<std::size_t>>();
    if (shape != values_[i].shape())
      throw ShapeError("checkpoint: tensor '" + name + "' has shape " + ad::shape_string(shape) +
                       ", expected " + values_[i].shape_string());
    values_[i] = ad::Tensor(std::move(shape), entry.at("data").get<std::vector<double>>());
  }
}

Binding::Binding(ad::Tape& tape, const ParameterStore& store) {
  vars_.reserve(store.size());
  for (std::size_t i = 0; i < store.size(); ++i) vars_.push_back(tape.parameter(store.value(i)));
}

std::vector<ad::Tensor> Binding::collect(const ad::Gradients& grads) const {
  std::vector<ad::Tensor> out;
  out.reserve(vars_.size());
  for (ad::Var v : vars_) out.push_back(grads[v]);
  return out;
}

}  // namespace midpc::nn
