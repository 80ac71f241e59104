// Compiled with -mavx2 -mfma; only reached through the dispatch table after
// a runtime CPU check.

#include <immintrin.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "midpc/simd/kernels.hpp"

namespace midpc::simd {
namespace {

constexpr std::size_t kMr = 6;
constexpr std::size_t kNr = 8;
constexpr std::size_t kKc = 256;
constexpr std::size_t kMc = 96;
constexpr std::size_t kNc = 1024;

void pack_a(std::size_t mc, std::size_t kc, ConstMatrixRef a, std::size_t i0, std::size_t p0,
            double* buf) {
  for (std::size_t s = 0; s < mc; s += kMr) {
    const std::size_t rows = std::min(kMr, mc - s);
    for (std::size_t p = 0; p < kc; ++p) {
      double* dst = buf + (s / kMr) * kc * kMr + p * kMr;
      std::size_t r = 0;
      for (; r < rows; ++r) dst[r] = a(i0 + s + r, p0 + p);
      for (; r < kMr; ++r) dst[r] = 0.0;
    }
  }
}

void pack_b(std::size_t kc, std::size_t nc, ConstMatrixRef b, std::size_t p0, std::size_t j0,
            double* buf) {
  for (std::size_t t = 0; t < nc; t += kNr) {
    const std::size_t cols = std::min(kNr, nc - t);
    double* strip = buf + (t / kNr) * kc * kNr;
    if (cols == kNr && b.col_stride == 1) {
      for (std::size_t p = 0; p < kc; ++p) {
        const double* src = &b.data[static_cast<std::ptrdiff_t>(p0 + p) * b.row_stride +
                                    static_cast<std::ptrdiff_t>(j0 + t)];
        _mm256_storeu_pd(strip + p * kNr, _mm256_loadu_pd(src));
        _mm256_storeu_pd(strip + p * kNr + 4, _mm256_loadu_pd(src + 4));
      }
      continue;
    }
    for (std::size_t p = 0; p < kc; ++p) {
      double* dst = strip + p * kNr;
      std::size_t c = 0;
      for (; c < cols; ++c) dst[c] = b(p0 + p, j0 + t + c);
      for (; c < kNr; ++c) dst[c] = 0.0;
    }
  }
}

void micro_kernel(std::size_t kc, const double* ap, const double* bp, double alpha, double* c,
                  std::size_t ldc, std::size_t rows, std::size_t cols) {
  __m256d acc[kMr][2];
  for (auto& row : acc) row[0] = row[1] = _mm256_setzero_pd();
  for (std::size_t p = 0; p < kc; ++p) {
    const __m256d b0 = _mm256_loadu_pd(bp);
    const __m256d b1 = _mm256_loadu_pd(bp + 4);
    for (std::size_t r = 0; r < kMr; ++r) {
      const __m256d av = _mm256_broadcast_sd(ap + r);
      acc[r][0] = _mm256_fmadd_pd(av, b0, acc[r][0]);
      acc[r][1] = _mm256_fmadd_pd(av, b1, acc[r][1]);
    }
    ap += kMr;
    bp += kNr;
  }
  const __m256d alpha_v = _mm256_set1_pd(alpha);
  if (rows == kMr && cols == kNr) {
    for (std::size_t r = 0; r < kMr; ++r) {
      double* dst = c + r * ldc;
      _mm256_storeu_pd(dst, _mm256_fmadd_pd(alpha_v, acc[r][0], _mm256_loadu_pd(dst)));
      _mm256_storeu_pd(dst + 4, _mm256_fmadd_pd(alpha_v, acc[r][1], _mm256_loadu_pd(dst + 4)));
    }
    return;
  }
  alignas(32) double tile[kMr][kNr];
  for (std::size_t r = 0; r < kMr; ++r) {
    _mm256_store_pd(&tile[r][0], acc[r][0]);
    _mm256_store_pd(&tile[r][4], acc[r][1]);
  }
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < cols; ++j) c[r * ldc + j] += alpha * tile[r][j];
}

void gemm_avx2(std::size_t m, std::size_t n, std::size_t k, double alpha, ConstMatrixRef a,
               ConstMatrixRef b, double beta, double* c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    double* row = c + i * ldc;
    if (beta == 0.0) {
      std::fill(row, row + n, 0.0);
    } else if (beta != 1.0) {
      for (std::size_t j = 0; j < n; ++j) row[j] *= beta;
    }
  }
  if (k == 0 || alpha == 0.0) return;

  thread_local std::vector<double> a_buf;
  thread_local std::vector<double> b_buf;
  a_buf.resize(((kMc + kMr - 1) / kMr) * kMr * kKc);
  b_buf.resize(((kNc + kNr - 1) / kNr) * kNr * kKc);

  for (std::size_t jc = 0; jc < n; jc += kNc) {
    const std::size_t nc = std::min(kNc, n - jc);
    for (std::size_t pc = 0; pc < k; pc += kKc) {
      const std::size_t kc = std::min(kKc, k - pc);
      pack_b(kc, nc, b, pc, jc, b_buf.data());
      for (std::size_t ic = 0; ic < m; ic += kMc) {
        const std::size_t mc = std::min(kMc, m - ic);
        pack_a(mc, kc, a, ic, pc, a_buf.data());
        for (std::size_t jr = 0; jr < nc; jr += kNr) {
          const double* bp = b_buf.data() + (jr / kNr) * kc * kNr;
          for (std::size_t ir = 0; ir < mc; ir += kMr) {
            const double* ap = a_buf.data() + (ir / kMr) * kc * kMr;
            micro_kernel(kc, ap, bp, alpha, c + (ic + ir) * ldc + jc + jr, ldc,
                         std::min(kMr, mc - ir), std::min(kNr, nc - jr));
          }
        }
      }
    }
  }
}

void axpy_avx2(std::size_t n, double alpha, const double* x, double* y) {
  const __m256d av = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

double dot_avx2(std::size_t n, const double* x, const double* y) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4)
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, _mm256_add_pd(acc0, acc1));
  double sum = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
  for (; i < n; ++i) sum += x[i] * y[i];
  return sum;
}

template <typename VecOp, typename ScalarOp>
void binary_avx2(std::size_t n, const double* x, const double* y, double* out, VecOp vop,
                 ScalarOp sop) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, vop(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) out[i] = sop(x[i], y[i]);
}

void add_avx2(std::size_t n, const double* x, const double* y, double* out) {
  binary_avx2(
      n, x, y, out, [](__m256d a, __m256d b) { return _mm256_add_pd(a, b); },
      [](double a, double b) { return a + b; });
}

void sub_avx2(std::size_t n, const double* x, const double* y, double* out) {
  binary_avx2(
      n, x, y, out, [](__m256d a, __m256d b) { return _mm256_sub_pd(a, b); },
      [](double a, double b) { return a - b; });
}

void mul_avx2(std::size_t n, const double* x, const double* y, double* out) {
  binary_avx2(
      n, x, y, out, [](__m256d a, __m256d b) { return _mm256_mul_pd(a, b); },
      [](double a, double b) { return a * b; });
}

void scale_avx2(std::size_t n, double alpha, const double* x, double* out) {
  const __m256d av = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(out + i, _mm256_mul_pd(av, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) out[i] = alpha * x[i];
}

void add_row_avx2(std::size_t rows, std::size_t cols, const double* row, double* inout) {
  for (std::size_t r = 0; r < rows; ++r) add_avx2(cols, inout + r * cols, row, inout + r * cols);
}

void column_sums_avx2(std::size_t rows, std::size_t cols, const double* x, double* out) {
  for (std::size_t r = 0; r < rows; ++r) add_avx2(cols, out, x + r * cols, out);
}

// exp on lanes known to lie in [-708, 709]: Cody-Waite reduction by ln 2 and a
// degree-13 Taylor polynomial on |r| <= ln(2)/2 (truncation < 1e-17).
inline __m256d exp_in_range(__m256d x) {
  const __m256d log2e = _mm256_set1_pd(1.4426950408889634074);
  const __m256d ln2_hi = _mm256_set1_pd(6.93147180369123816490e-01);
  const __m256d ln2_lo = _mm256_set1_pd(1.90821492927058770002e-10);
  const __m256d n = _mm256_round_pd(_mm256_mul_pd(x, log2e),
                                    _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d r = _mm256_fnmadd_pd(n, ln2_hi, x);
  r = _mm256_fnmadd_pd(n, ln2_lo, r);

  static constexpr double kInvFactorial[] = {
      1.0 / 6227020800.0, 1.0 / 479001600.0, 1.0 / 39916800.0, 1.0 / 3628800.0,
      1.0 / 362880.0,     1.0 / 40320.0,     1.0 / 5040.0,     1.0 / 720.0,
      1.0 / 120.0,        1.0 / 24.0,        1.0 / 6.0,        1.0 / 2.0,
      1.0,                1.0};
  __m256d p = _mm256_set1_pd(kInvFactorial[0]);
  for (std::size_t i = 1; i < std::size(kInvFactorial); ++i)
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(kInvFactorial[i]));

  const __m128i n32 = _mm256_cvtpd_epi32(n);
  __m256i bits = _mm256_cvtepi32_epi64(n32);
  bits = _mm256_add_epi64(bits, _mm256_set1_epi64x(1023));
  bits = _mm256_slli_epi64(bits, 52);
  return _mm256_mul_pd(p, _mm256_castsi256_pd(bits));
}

void exp_avx2(std::size_t n, const double* x, double* out) {
  const __m256d lo = _mm256_set1_pd(-708.0);
  const __m256d hi = _mm256_set1_pd(709.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d v = _mm256_loadu_pd(x + i);
    const __m256d ok =
        _mm256_and_pd(_mm256_cmp_pd(v, lo, _CMP_GE_OQ), _mm256_cmp_pd(v, hi, _CMP_LE_OQ));
    if (_mm256_movemask_pd(ok) == 0xF) {
      _mm256_storeu_pd(out + i, exp_in_range(v));
    } else {
      for (std::size_t j = i; j < i + 4; ++j) out[j] = std::exp(x[j]);
    }
  }
  for (; i < n; ++i) out[i] = std::exp(x[i]);
}

// tanh(|x|) = expm1(2|x|) / (expm1(2|x|) + 2) below 0.55 (series expm1 keeps
// full relative accuracy near 0) and 1 - 2 / (exp(2|x|) + 1) above.
void tanh_avx2(std::size_t n, const double* x, double* out) {
  const __m256d sign_mask = _mm256_set1_pd(-0.0);
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d two = _mm256_set1_pd(2.0);
  const __m256d split = _mm256_set1_pd(0.55);
  const __m256d cap = _mm256_set1_pd(40.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d v = _mm256_loadu_pd(x + i);
    if (_mm256_movemask_pd(_mm256_cmp_pd(v, v, _CMP_ORD_Q)) != 0xF) {
      for (std::size_t j = i; j < i + 4; ++j) out[j] = std::tanh(x[j]);
      continue;
    }
    const __m256d sign = _mm256_and_pd(v, sign_mask);
    const __m256d ax = _mm256_andnot_pd(sign_mask, v);
    const __m256d y = _mm256_mul_pd(two, ax);

    const __m256d e = exp_in_range(_mm256_min_pd(y, cap));
    const __m256d large = _mm256_sub_pd(one, _mm256_div_pd(two, _mm256_add_pd(e, one)));

    // expm1(y) = y * sum_{k>=0} y^k / (k+1)!, truncated after k = 17.
    __m256d p = one;
    for (int k = 18; k >= 2; --k)
      p = _mm256_fmadd_pd(_mm256_mul_pd(y, _mm256_set1_pd(1.0 / k)), p, one);
    const __m256d em = _mm256_mul_pd(y, p);
    const __m256d small = _mm256_div_pd(em, _mm256_add_pd(em, two));

    const __m256d use_small = _mm256_cmp_pd(ax, split, _CMP_LT_OQ);
    const __m256d t = _mm256_blendv_pd(large, small, use_small);
    _mm256_storeu_pd(out + i, _mm256_or_pd(t, sign));
  }
  for (; i < n; ++i) out[i] = std::tanh(x[i]);
}

constexpr KernelTable kAvx2Table{
    gemm_avx2,  axpy_avx2,    dot_avx2,         add_avx2, sub_avx2,  mul_avx2,
    scale_avx2, add_row_avx2, column_sums_avx2, exp_avx2, tanh_avx2,
};

}  // namespace

const KernelTable* avx2_kernels() { return &kAvx2Table; }

}  // namespace midpc::simd
