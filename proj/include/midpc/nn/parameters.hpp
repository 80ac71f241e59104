#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "midpc/autodiff/tape.hpp"

namespace midpc::nn {

/// Named, ordered collection of trainable tensors. Order is insertion order
/// and is part of the checkpoint format.
class ParameterStore {
 public:
  std::size_t add(std::string name, ad::Tensor value);

  std::size_t size() const { return values_.size(); }
  const std::string& name(std::size_t i) const { return names_.at(i); }
  const ad::Tensor& value(std::size_t i) const { return values_.at(i); }
  ad::Tensor& mutable_value(std::size_t i) { return values_.at(i); }
  std::optional<std::size_t> find(const std::string& name) const;

  /// Total number of trainable scalars.
  std::size_t scalar_count() const;

  nlohmann::json to_json() const;
  /// Replaces values from `j`; names, order and shapes must match exactly.
  void load_json(const nlohmann::json& j);

  friend bool operator==(const ParameterStore&, const ParameterStore&) = default;

 private:
  std::vector<std::string> names_;
  std::vector<ad::Tensor> values_;
};

/// Parameter leaves of one store registered on one tape.
class Binding {
 public:
  Binding(ad::Tape& tape, const ParameterStore& store);
  ad::Var operator[](std::size_t i) const { return vars_.at(i); }
  const std::vector<ad::Var>& vars() const { return vars_; }
  /// Gradients in store order.
  std::vector<ad::Tensor> collect(const ad::Gradients& grads) const;

 private:
  std::vector<ad::Var> vars_;
};

}  // namespace midpc::nn
