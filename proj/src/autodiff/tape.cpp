#include "midpc/autodiff/tape.hpp"

#include <string>

#include "midpc/util/errors.hpp"

namespace midpc::ad {

std::string_view to_string(OpKind kind) {
  switch (kind) {
    case OpKind::Constant: return "constant";
    case OpKind::Parameter: return "parameter";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::Scale: return "scale";
    case OpKind::MatMul: return "matmul";
    case OpKind::Affine: return "affine";
    case OpKind::Tanh: return "tanh";
    case OpKind::Selu: return "selu";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::Softmax: return "softmax";
    case OpKind::Log: return "log";
    case OpKind::Exp: return "exp";
    case OpKind::LayerNorm: return "layer_norm";
    case OpKind::Dropout: return "dropout";
    case OpKind::Sum: return "sum";
    case OpKind::SquaredNorm: return "squared_norm";
    case OpKind::Clip: return "clip";
    case OpKind::Concat: return "concat";
    case OpKind::Slice: return "slice";
    case OpKind::Custom: return "custom";
  }
  return "unknown";
}

const Tensor& BackwardArgs::input(std::size_t i) const { return tape.value(inputs[i]); }

const Tape::Node& Tape::node(Var v) const {
  if (!v.valid() || v.id >= nodes_.size())
    throw ContractError("tape: node id " + std::to_string(v.id) + " is not on this tape");
  return nodes_[v.id];
}

Var Tape::constant(Tensor value) {
  nodes_.push_back({OpKind::Constant, {}, std::move(value), {}, false});
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::parameter(Tensor value) {
  nodes_.push_back({OpKind::Parameter, {}, std::move(value), {}, record_backward_});
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::record(OpKind kind, std::vector<Var> inputs, Tensor value, BackwardFn backward) {
  bool needs_grad = false;
  for (Var in : inputs) needs_grad = needs_grad || node(in).requires_grad;
  needs_grad = needs_grad && record_backward_ && static_cast<bool>(backward);
  if (!needs_grad) backward = nullptr;
  nodes_.push_back({kind, std::move(inputs), std::move(value), std::move(backward), needs_grad});
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

const Tensor& Gradients::operator[](Var v) const {
  if (!contains(v))
    throw ContractError("gradients: node " + std::to_string(v.id) + " is not a parameter leaf");
  return grads_[v.id];
}

bool Gradients::contains(Var v) const { return v.valid() && v.id < present_.size() && present_[v.id]; }

Gradients backward(const Tape& tape, Var loss) {
  const auto& loss_node = tape.node(loss);
  if (loss_node.value.size() != 1)
    throw ContractError("backward: loss must be scalar, got shape " + loss_node.value.shape_string());

  Gradients out;
  const std::size_t n = loss.id + 1;
  std::vector<Tensor> grads(n);
  if (loss_node.requires_grad) grads[loss.id] = Tensor(loss_node.value.shape(), 1.0);

  std::vector<Tensor*> input_grads;
  for (std::size_t i = n; i-- > 0;) {
    const auto& node = tape.nodes_[i];
    if (!node.requires_grad || node.kind == OpKind::Parameter || grads[i].empty()) continue;
    input_grads.assign(node.inputs.size(), nullptr);
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      const Var in = node.inputs[k];
      const auto& in_node = tape.nodes_[in.id];
      if (!in_node.requires_grad) continue;
      if (grads[in.id].empty()) grads[in.id] = Tensor(in_node.value.shape(), 0.0);
      input_grads[k] = &grads[in.id];
    }
    node.backward(BackwardArgs{tape, node.inputs, node.value, grads[i], input_grads});
    grads[i] = Tensor();
  }

  const std::size_t total = tape.size();
  grads.resize(total);
  out.present_.assign(total, false);
  out.grads_.resize(total);
  for (std::size_t i = 0; i < total; ++i) {
    const auto& node = tape.nodes_[i];
    if (node.kind != OpKind::Parameter || !node.requires_grad) continue;
    out.grads_[i] = grads[i].empty() ? Tensor(node.value.shape(), 0.0) : std::move(grads[i]);
    out.present_[i] = true;
  }
  return out;
}

}  // namespace midpc::ad
