#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "midpc/autodiff/tensor.hpp"

namespace midpc::ad {

/// Handle to a node recorded on a Tape.
struct Var {
  static constexpr std::uint32_t kInvalid = 0xffffffffu;
  std::uint32_t id = kInvalid;

  bool valid() const { return id != kInvalid; }
  friend bool operator==(Var a, Var b) { return a.id == b.id; }
};

enum class OpKind : std::uint8_t {
  Constant,
  Parameter,
  Add,
  Sub,
  Mul,
  Scale,
  MatMul,
  Affine,
  Tanh,
  Selu,
  Sigmoid,
  Softmax,
  Log,
  Exp,
  LayerNorm,
  Dropout,
  Sum,
  SquaredNorm,
  Clip,
  Concat,
  Slice,
  Custom,
};

std::string_view to_string(OpKind kind);

class Tape;
class Gradients;
Gradients backward(const Tape& tape, Var loss);

/// Everything a backward rule sees. `input_grads[i]` is null when input i
/// does not require a gradient; otherwise the rule adds into it.
struct BackwardArgs {
  const Tape& tape;
  std::span<const Var> inputs;
  const Tensor& value;
  const Tensor& grad;
  std::span<Tensor* const> input_grads;

  const Tensor& input(std::size_t i) const;
};

using BackwardFn = std::function<void(const BackwardArgs&)>;

/// Append-only record of eagerly evaluated operations.
///
/// A tape constructed with `record_backward = false` still stores values
/// (so ops compose identically) but keeps no backward rules; it is what
/// evaluation-mode rollouts use. References returned by value() remain valid
/// for the lifetime of the tape.
class Tape {
 public:
  explicit Tape(bool record_backward = true) : record_backward_(record_backward) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  Var constant(Tensor value);
  /// Leaf whose gradient backward() reports.
  Var parameter(Tensor value);

  /// Appends a node whose forward value has already been computed.
  /// Throws ContractError if any input id is not on this tape.
  Var record(OpKind kind, std::vector<Var> inputs, Tensor value, BackwardFn backward);

  const Tensor& value(Var v) const { return node(v).value; }
  OpKind kind(Var v) const { return node(v).kind; }
  bool requires_grad(Var v) const { return node(v).requires_grad; }
  std::span<const Var> inputs(Var v) const { return node(v).inputs; }
  bool recording() const { return record_backward_; }
  std::size_t size() const { return nodes_.size(); }

 private:
  friend class Gradients;
  friend Gradients backward(const Tape& tape, Var loss);

  struct Node {
    OpKind kind;
    std::vector<Var> inputs;
    Tensor value;
    BackwardFn backward;
    bool requires_grad;
  };

  const Node& node(Var v) const;

  // deque: values returned by value() stay valid while more nodes are recorded.
  std::deque<Node> nodes_;
  bool record_backward_;
};

/// Gradients of a scalar loss with respect to every parameter leaf.
/// Leaves the loss does not depend on get zero tensors.
class Gradients {
 public:
  const Tensor& operator[](Var v) const;
  bool contains(Var v) const;

 private:
  friend Gradients backward(const Tape& tape, Var loss);
  std::vector<Tensor> grads_;
  std::vector<bool> present_;
};

/// Reverse sweep from `loss`, which must hold exactly one element.
Gradients backward(const Tape& tape, Var loss);

}  // namespace midpc::ad
