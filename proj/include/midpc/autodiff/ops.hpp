#pragma once

#include <vector>

#include "midpc/autodiff/tape.hpp"

namespace midpc::ad {

// Differentiable primitives. Every op evaluates eagerly and, on a recording
// tape, attaches its local backward rule. Matrix semantics follow Tensor:
// rank-1 operands act as single rows.
//
// Binary elementwise ops accept either equal shapes or a right operand with
// a single row, which is broadcast over the rows of the left operand.

Var add(Tape& tape, Var a, Var b);
Var sub(Tape& tape, Var a, Var b);
Var mul(Tape& tape, Var a, Var b);
Var scale(Tape& tape, Var a, double factor);

/// (m x k) * (k x n)
Var matmul(Tape& tape, Var a, Var b);
/// x * W^T + b for x (m x in), W (out x in), b (out).
Var affine(Tape& tape, Var x, Var weight, Var bias);

Var tanh(Tape& tape, Var x);
Var selu(Tape& tape, Var x);
Var sigmoid(Tape& tape, Var x);
/// Row-wise softmax with max subtraction.
Var softmax(Tape& tape, Var x);
/// Throws NumericalError on non-positive entries.
Var log(Tape& tape, Var x);
Var exp(Tape& tape, Var x);

/// Row-wise (x - mean) / sqrt(var + eps) * gain + offset.
Var layer_norm(Tape& tape, Var x, Var gain, Var offset, double eps = 1e-5);

/// x * mask, with a precomputed (already rescaled) constant mask.
Var apply_mask(Tape& tape, Var x, Tensor mask);

Var sum(Tape& tape, Var x);
Var squared_norm(Tape& tape, Var x);
/// Gradient passes where lo <= x <= hi and is zero elsewhere.
Var clip(Tape& tape, Var x, double lo, double hi);

/// Column-wise concatenation of matrices with equal row counts.
Var concat_cols(Tape& tape, const std::vector<Var>& parts);
Var slice_cols(Tape& tape, Var x, std::size_t begin, std::size_t count);

/// Node whose forward value is supplied by the caller (typically a discrete
/// map) and whose backward rule is an arbitrary surrogate.
Var custom_grad(Tape& tape, std::vector<Var> inputs, Tensor forward_value,
                BackwardFn surrogate_backward);

inline constexpr double kSeluAlpha = 1.6732632423543772;
inline constexpr double kSeluLambda = 1.0507009873554805;

/// Numerically stable logistic function.
double sigmoid(double x);

}  // namespace midpc::ad
