#include "midpc/autodiff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "midpc/simd/kernels.hpp"
#include "midpc/util/errors.hpp"

namespace midpc::ad {
namespace {

using simd::active;

[[noreturn]] void shape_fail(const char* op, const Tensor& a, const Tensor& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + a.shape_string() + " and " +
                   b.shape_string());
}

enum class Broadcast { None, Row };

Broadcast check_binary(const char* op, const Tensor& a, const Tensor& b) {
  if (a.same_shape(b)) return Broadcast::None;
  if (a.rank() <= 2 && b.rank() <= 2 && b.rows() == 1 && b.cols() == a.cols())
    return Broadcast::Row;
  shape_fail(op, a, b);
}

void accumulate(Tensor& dst, const Tensor& src) {
  active().add(dst.size(), dst.raw(), src.raw(), dst.raw());
}

void accumulate_scaled(Tensor& dst, double factor, const Tensor& src) {
  active().axpy(dst.size(), factor, src.raw(), dst.raw());
}

void accumulate_column_sums(Tensor& dst, const Tensor& src) {
  active().accumulate_column_sums(src.rows(), src.cols(), src.raw(), dst.raw());
}

Tensor like(const Tensor& t) { return Tensor(t.shape(), 0.0); }

template <typename Fn>
Tensor map(const Tensor& x, Fn fn) {
  Tensor out = like(x);
  const double* in = x.raw();
  double* o = out.raw();
  for (std::size_t i = 0; i < x.size(); ++i) o[i] = fn(in[i]);
  return out;
}

}  // namespace

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Var add(Tape& tape, Var a, Var b) {
  const Tensor& av = tape.value(a);
  const Tensor& bv = tape.value(b);
  const Broadcast mode = check_binary("add", av, bv);
  Tensor out = av;
  if (mode == Broadcast::None) {
    active().add(out.size(), av.raw(), bv.raw(), out.raw());
  } else {
    active().add_row(out.rows(), out.cols(), bv.raw(), out.raw());
  }
  return tape.record(OpKind::Add, {a, b}, std::move(out), [mode](const BackwardArgs& args) {
    if (args.input_grads[0]) accumulate(*args.input_grads[0], args.grad);
    if (Tensor* gb = args.input_grads[1]) {
      if (mode == Broadcast::None) {
        accumulate(*gb, args.grad);
      } else {
        accumulate_column_sums(*gb, args.grad);
      }
    }
  });
}

Var sub(Tape& tape, Var a, Var b) {
  const Tensor& av = tape.value(a);
  const Tensor& bv = tape.value(b);
  const Broadcast mode = check_binary("sub", av, bv);
  Tensor out = like(av);
  if (mode == Broadcast::None) {
    active().sub(out.size(), av.raw(), bv.raw(), out.raw());
  } else {
    for (std::size_t r = 0; r < av.rows(); ++r)
      active().sub(av.cols(), av.raw() + r * av.cols(), bv.raw(), out.raw() + r * av.cols());
  }
  return tape.record(OpKind::Sub, {a, b}, std::move(out), [mode](const BackwardArgs& args) {
    if (args.input_grads[0]) accumulate(*args.input_grads[0], args.grad);
    if (Tensor* gb = args.input_grads[1]) {
      if (mode == Broadcast::None) {
        accumulate_scaled(*gb, -1.0, args.grad);
      } else {
        Tensor colsum = like(*gb);
        accumulate_column_sums(colsum, args.grad);
        accumulate_scaled(*gb, -1.0, colsum);
      }
    }
  });
}

Var mul(Tape& tape, Var a, Var b) {
  const Tensor& av = tape.value(a);
  const Tensor& bv = tape.value(b);
  const Broadcast mode = check_binary("mul", av, bv);
  Tensor out = like(av);
  const std::size_t cols = av.cols();
  if (mode == Broadcast::None) {
    active().mul(out.size(), av.raw(), bv.raw(), out.raw());
  } else {
    for (std::size_t r = 0; r < av.rows(); ++r)
      active().mul(cols, av.raw() + r * cols, bv.raw(), out.raw() + r * cols);
  }
  return tape.record(OpKind::Mul, {a, b}, std::move(out), [mode](const BackwardArgs& args) {
    const Tensor& av = args.input(0);
    const Tensor& bv = args.input(1);
    const std::size_t cols = av.cols();
    if (Tensor* ga = args.input_grads[0]) {
      Tensor prod = like(av);
      if (mode == Broadcast::None) {
        active().mul(prod.size(), args.grad.raw(), bv.raw(), prod.raw());
      } else {
        for (std::size_t r = 0; r < av.rows(); ++r)
          active().mul(cols, args.grad.raw() + r * cols, bv.raw(), prod.raw() + r * cols);
      }
      accumulate(*ga, prod);
    }
    if (Tensor* gb = args.input_grads[1]) {
      Tensor prod = like(av);
      active().mul(prod.size(), args.grad.raw(), av.raw(), prod.raw());
      if (mode == Broadcast::None) {
        accumulate(*gb, prod);
      } else {
        accumulate_column_sums(*gb, prod);
      }
    }
  });
}

Var scale(Tape& tape, Var a, double factor) {
  const Tensor& av = tape.value(a);
  Tensor out = like(av);
  active().scale(out.size(), factor, av.raw(), out.raw());
  return tape.record(OpKind::Scale, {a}, std::move(out), [factor](const BackwardArgs& args) {
    if (Tensor* ga = args.input_grads[0]) accumulate_scaled(*ga, factor, args.grad);
  });
}

Var matmul(Tape& tape, Var a, Var b) {
  const Tensor& av = tape.value(a);
  const Tensor& bv = tape.value(b);
  if (av.rank() > 2 || bv.rank() > 2 || av.cols() != bv.rows()) shape_fail("matmul", av, bv);
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  Tensor out = Tensor::matrix(m, n);
  active().gemm(m, n, k, 1.0, simd::row_major(av.raw(), k), simd::row_major(bv.raw(), n), 0.0,
                out.raw(), n);
  return tape.record(OpKind::MatMul, {a, b}, std::move(out), [](const BackwardArgs& args) {
    const Tensor& av = args.input(0);
    const Tensor& bv = args.input(1);
    const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
    const double* g = args.grad.raw();
    // dA += G B^T, dB += A^T G
    if (Tensor* ga = args.input_grads[0])
      active().gemm(m, k, n, 1.0, simd::row_major(g, n), simd::transposed(bv.raw(), n), 1.0,
                    ga->raw(), k);
    if (Tensor* gb = args.input_grads[1])
      active().gemm(k, n, m, 1.0, simd::transposed(av.raw(), k), simd::row_major(g, n), 1.0,
                    gb->raw(), n);
  });
}

Var affine(Tape& tape, Var x, Var weight, Var bias) {
  const Tensor& xv = tape.value(x);
  const Tensor& wv = tape.value(weight);
  const Tensor& bv = tape.value(bias);
  if (xv.rank() > 2 || wv.rank() != 2 || xv.cols() != wv.cols()) shape_fail("affine", xv, wv);
  if (bv.size() != wv.rows()) shape_fail("affine", wv, bv);
  const std::size_t m = xv.rows(), in = xv.cols(), out_w = wv.rows();
  Tensor out = Tensor::matrix(m, out_w);
  active().gemm(m, out_w, in, 1.0, simd::row_major(xv.raw(), in),
                simd::transposed(wv.raw(), in), 0.0, out.raw(), out_w);
  active().add_row(m, out_w, bv.raw(), out.raw());
  return tape.record(OpKind::Affine, {x, weight, bias}, std::move(out),
                     [](const BackwardArgs& args) {
                       const Tensor& xv = args.input(0);
                       const Tensor& wv = args.input(1);
                       const std::size_t m = xv.rows(), in = xv.cols(), out_w = wv.rows();
                       const double* g = args.grad.raw();
                       // dx += G W, dW += G^T x, db += colsum(G)
                       if (Tensor* gx = args.input_grads[0])
                         active().gemm(m, in, out_w, 1.0, simd::row_major(g, out_w),
                                       simd::row_major(wv.raw(), in), 1.0, gx->raw(), in);
                       if (Tensor* gw = args.input_grads[1])
                         active().gemm(out_w, in, m, 1.0, simd::transposed(g, out_w),
                                       simd::row_major(xv.raw(), in), 1.0, gw->raw(), in);
                       if (Tensor* gb = args.input_grads[2])
                         active().accumulate_column_sums(m, out_w, g, gb->raw());
                     });
}

Var tanh(Tape& tape, Var x) {
  const Tensor& xv = tape.value(x);
  Tensor out = like(xv);
  active().tanh(xv.size(), xv.raw(), out.raw());
  return tape.record(OpKind::Tanh, {x}, std::move(out), [](const BackwardArgs& args) {
    Tensor* gx = args.input_grads[0];
    const double* y = args.value.raw();
    const double* g = args.grad.raw();
    double* dst = gx->raw();
    for (std::size_t i = 0; i < args.value.size(); ++i) dst[i] += g[i] * (1.0 - y[i] * y[i]);
  });
}

Var selu(Tape& tape, Var x) {
  const Tensor& xv = tape.value(x);
  Tensor out = like(xv);
  active().exp(xv.size(), xv.raw(), out.raw());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const double v = xv[i];
    out[i] = v > 0.0 ? kSeluLambda * v : kSeluLambda * kSeluAlpha * (out[i] - 1.0);
  }
  return tape.record(OpKind::Selu, {x}, std::move(out), [](const BackwardArgs& args) {
    const Tensor& xv = args.input(0);
    double* dst = args.input_grads[0]->raw();
    for (std::size_t i = 0; i < xv.size(); ++i) {
      const double slope =
          xv[i] > 0.0 ? kSeluLambda : args.value[i] + kSeluLambda * kSeluAlpha;
      dst[i] += args.grad[i] * slope;
    }
  });
}

Var sigmoid(Tape& tape, Var x) {
  const Tensor& xv = tape.value(x);
  Tensor out = map(xv, [](double v) { return -std::abs(v); });
  active().exp(out.size(), out.raw(), out.raw());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const double e = out[i];
    out[i] = xv[i] >= 0.0 ? 1.0 / (1.0 + e) : e / (1.0 + e);
  }
  return tape.record(OpKind::Sigmoid, {x}, std::move(out), [](const BackwardArgs& args) {
    double* dst = args.input_grads[0]->raw();
    for (std::size_t i = 0; i < args.value.size(); ++i) {
      const double y = args.value[i];
      dst[i] += args.grad[i] * y * (1.0 - y);
    }
  });
}

Var softmax(Tape& tape, Var x) {
  const Tensor& xv = tape.value(x);
  const std::size_t rows = xv.rows(), cols = xv.cols();
  Tensor out = like(xv);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.raw() + r * cols;
    double* o = out.raw() + r * cols;
    const double peak = *std::max_element(in, in + cols);
    for (std::size_t c = 0; c < cols; ++c) o[c] = in[c] - peak;
    active().exp(cols, o, o);
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) total += o[c];
    for (std::size_t c = 0; c < cols; ++c) o[c] /= total;
  }
  return tape.record(OpKind::Softmax, {x}, std::move(out), [](const BackwardArgs& args) {
    const std::size_t rows = args.value.rows(), cols = args.value.cols();
    double* dst = args.input_grads[0]->raw();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = args.value.raw() + r * cols;
      const double* g = args.grad.raw() + r * cols;
      double inner = 0.0;
      for (std::size_t c = 0; c < cols; ++c) inner += g[c] * y[c];
      for (std::size_t c = 0; c < cols; ++c) dst[r * cols + c] += y[c] * (g[c] - inner);
    }
  });
}

Var log(Tape& tape, Var x) {
  const Tensor& xv = tape.value(x);
  Tensor out = map(xv, [](double v) {
    if (!(v > 0.0)) throw NumericalError("log: non-positive input " + std::to_string(v));
    return std::log(v);
  });
  return tape.record(OpKind::Log, {x}, std::move(out), [](const BackwardArgs& args) {
    const Tensor& xv = args.input(0);
    double* dst = args.input_grads[0]->raw();
    for (std::size_t i = 0; i < xv.size(); ++i) dst[i] += args.grad[i] / xv[i];
  });
}

Var exp(Tape& tape, Var x) {
  const Tensor& xv = tape.value(x);
  Tensor out = like(xv);
  active().exp(xv.size(), xv.raw(), out.raw());
  return tape.record(OpKind::Exp, {x}, std::move(out), [](const BackwardArgs& args) {
    Tensor prod = like(args.value);
    active().mul(prod.size(), args.grad.raw(), args.value.raw(), prod.raw());
    accumulate(*args.input_grads[0], prod);
  });
}

Var layer_norm(Tape& tape, Var x, Var gain, Var offset, double eps) {
  const Tensor& xv = tape.value(x);
  const Tensor& gv = tape.value(gain);
  const Tensor& ov = tape.value(offset);
  const std::size_t rows = xv.rows(), cols = xv.cols();
  if (gv.size() != cols) shape_fail("layer_norm", xv, gv);
  if (ov.size() != cols) shape_fail("layer_norm", xv, ov);

  // Normalized activations and per-row inverse std are kept for backward.
  Tensor normalized = like(xv);
  std::vector<double> inv_std(rows);
  Tensor out = like(xv);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.raw() + r * cols;
    double mean = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mean += in[c];
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) var += (in[c] - mean) * (in[c] - mean);
    var /= static_cast<double>(cols);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    double* nrm = normalized.raw() + r * cols;
    double* o = out.raw() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) {
      nrm[c] = (in[c] - mean) * is;
      o[c] = nrm[c] * gv[c] + ov[c];
    }
  }
  const bool keep = tape.recording();
  return tape.record(
      OpKind::LayerNorm, {x, gain, offset}, std::move(out),
      [normalized = keep ? std::move(normalized) : Tensor(),
       inv_std = keep ? std::move(inv_std) : std::vector<double>()](const BackwardArgs& args) {
        const Tensor& gv = args.input(1);
        const std::size_t rows = normalized.rows(), cols = normalized.cols();
        const double* g = args.grad.raw();
        if (Tensor* gg = args.input_grads[1]) {
          Tensor prod = like(normalized);
          active().mul(prod.size(), g, normalized.raw(), prod.raw());
          accumulate_column_sums(*gg, prod);
        }
        if (Tensor* go = args.input_grads[2]) accumulate_column_sums(*go, args.grad);
        if (Tensor* gx = args.input_grads[0]) {
          std::vector<double> dn(cols);
          for (std::size_t r = 0; r < rows; ++r) {
            const double* nrm = normalized.raw() + r * cols;
            const double* gr = g + r * cols;
            double mean_dn = 0.0, mean_dn_n = 0.0;
            for (std::size_t c = 0; c < cols; ++c) {
              dn[c] = gr[c] * gv[c];
              mean_dn += dn[c];
              mean_dn_n += dn[c] * nrm[c];
            }
            mean_dn /= static_cast<double>(cols);
            mean_dn_n /= static_cast<double>(cols);
            double* dst = gx->raw() + r * cols;
            for (std::size_t c = 0; c < cols; ++c)
              dst[c] += inv_std[r] * (dn[c] - mean_dn - nrm[c] * mean_dn_n);
          }
        }
      });
}

Var apply_mask(Tape& tape, Var x, Tensor mask) {
  const Tensor& xv = tape.value(x);
  if (!xv.same_shape(mask)) shape_fail("dropout", xv, mask);
  Tensor out = like(xv);
  active().mul(out.size(), xv.raw(), mask.raw(), out.raw());
  return tape.record(OpKind::Dropout, {x}, std::move(out),
                     [mask = std::move(mask)](const BackwardArgs& args) {
                       Tensor prod = like(mask);
                       active().mul(prod.size(), args.grad.raw(), mask.raw(), prod.raw());
                       accumulate(*args.input_grads[0], prod);
                     });
}

Var sum(Tape& tape, Var x) {
  const Tensor& xv = tape.value(x);
  double total = 0.0;
  for (double v : xv.data()) total += v;
  return tape.record(OpKind::Sum, {x}, Tensor::scalar(total), [](const BackwardArgs& args) {
    const double g = args.grad[0];
    Tensor* gx = args.input_grads[0];
    for (double& v : gx->data()) v += g;
  });
}

Var squared_norm(Tape& tape, Var x) {
  const Tensor& xv = tape.value(x);
  double total = 0.0;
  for (double v : xv.data()) total += v * v;
  return tape.record(OpKind::SquaredNorm, {x}, Tensor::scalar(total),
                     [](const BackwardArgs& args) {
                       accumulate_scaled(*args.input_grads[0], 2.0 * args.grad[0], args.input(0));
                     });
}

Var clip(Tape& tape, Var x, double lo, double hi) {
  if (!(lo <= hi)) throw ConfigError("clip: lower bound exceeds upper bound");
  const Tensor& xv = tape.value(x);
  Tensor out = map(xv, [lo, hi](double v) { return std::clamp(v, lo, hi); });
  return tape.record(OpKind::Clip, {x}, std::move(out), [lo, hi](const BackwardArgs& args) {
    const Tensor& xv = args.input(0);
    double* dst = args.input_grads[0]->raw();
    for (std::size_t i = 0; i < xv.size(); ++i)
      if (xv[i] >= lo && xv[i] <= hi) dst[i] += args.grad[i];
  });
}

Var concat_cols(Tape& tape, const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat: no operands");
  const std::size_t rows = tape.value(parts.front()).rows();
  std::size_t total_cols = 0;
  for (Var p : parts) {
    const Tensor& v = tape.value(p);
    if (v.rows() != rows) shape_fail("concat", tape.value(parts.front()), v);
    total_cols += v.cols();
  }
  Tensor out = Tensor::matrix(rows, total_cols);
  std::size_t offset = 0;
  for (Var p : parts) {
    const Tensor& v = tape.value(p);
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(v.raw() + r * v.cols(), v.cols(), out.raw() + r * total_cols + offset);
    offset += v.cols();
  }
  return tape.record(OpKind::Concat, parts, std::move(out), [](const BackwardArgs& args) {
    const std::size_t rows = args.value.rows(), total_cols = args.value.cols();
    std::size_t offset = 0;
    for (std::size_t k = 0; k < args.inputs.size(); ++k) {
      const std::size_t cols = args.input(k).cols();
      if (Tensor* gk = args.input_grads[k]) {
        for (std::size_t r = 0; r < rows; ++r)
          active().add(cols, gk->raw() + r * cols, args.grad.raw() + r * total_cols + offset,
                       gk->raw() + r * cols);
      }
      offset += cols;
    }
  });
}

Var slice_cols(Tape& tape, Var x, std::size_t begin, std::size_t count) {
  const Tensor& xv = tape.value(x);
  const std::size_t rows = xv.rows(), cols = xv.cols();
  if (count == 0 || begin + count > cols)
    throw ShapeError("slice: columns [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") out of range for " + xv.shape_string());
  Tensor out = Tensor::matrix(rows, count);
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(xv.raw() + r * cols + begin, count, out.raw() + r * count);
  return tape.record(OpKind::Slice, {x}, std::move(out), [begin](const BackwardArgs& args) {
    const std::size_t rows = args.value.rows(), count = args.value.cols();
    const std::size_t cols = args.input(0).cols();
    Tensor* gx = args.input_grads[0];
    for (std::size_t r = 0; r < rows; ++r)
      active().add(count, gx->raw() + r * cols + begin, args.grad.raw() + r * count,
                   gx->raw() + r * cols + begin);
  });
}

Var custom_grad(Tape& tape, std::vector<Var> inputs, Tensor forward_value,
                BackwardFn surrogate_backward) {
  return tape.record(OpKind::Custom, std::move(inputs), std::move(forward_value),
                     std::move(surrogate_backward));
}

}  // namespace midpc::ad
