#pragma once

// Dense arithmetic kernels with a portable scalar reference and optional
// AVX2/FMA variants. The variant is chosen once at startup from the CPU's
// capabilities and can be overridden (MIDPC_SIMD=scalar|avx2, or
// set_level()) so the two paths can be compared against each other.

#include <cstddef>
#include <string_view>

namespace midpc::simd {

enum class Level { Scalar, Avx2 };

std::string_view to_string(Level level);

/// Read-only strided view of a row-major (or transposed) matrix.
struct ConstMatrixRef {
  const double* data;
  std::ptrdiff_t row_stride;
  std::ptrdiff_t col_stride;

  double operator()(std::size_t i, std::size_t j) const {
    return data[static_cast<std::ptrdiff_t>(i) * row_stride +
                static_cast<std::ptrdiff_t>(j) * col_stride];
  }
};

inline ConstMatrixRef row_major(const double* data, std::size_t cols) {
  return {data, static_cast<std::ptrdiff_t>(cols), 1};
}
inline ConstMatrixRef transposed(const double* data, std::size_t cols) {
  return {data, 1, static_cast<std::ptrdiff_t>(cols)};
}

struct KernelTable {
  /// C (m x n, leading dim ldc) = alpha * A (m x k) * B (k x n) + beta * C.
  /// beta == 0 overwrites C without reading it.
  void (*gemm)(std::size_t m, std::size_t n, std::size_t k, double alpha, ConstMatrixRef a,
               ConstMatrixRef b, double beta, double* c, std::size_t ldc);
  /// y += alpha * x
  void (*axpy)(std::size_t n, double alpha, const double* x, double* y);
  double (*dot)(std::size_t n, const double* x, const double* y);
  void (*add)(std::size_t n, const double* x, const double* y, double* out);
  void (*sub)(std::size_t n, const double* x, const double* y, double* out);
  void (*mul)(std::size_t n, const double* x, const double* y, double* out);
  /// out[i] = alpha * x[i]
  void (*scale)(std::size_t n, double alpha, const double* x, double* out);
  /// Adds `row` (length cols) to every row of the rows x cols matrix `inout`.
  void (*add_row)(std::size_t rows, std::size_t cols, const double* row, double* inout);
  /// Column sums of a rows x cols matrix, accumulated into out (length cols).
  void (*accumulate_column_sums)(std::size_t rows, std::size_t cols, const double* x,
                                 double* out);
  /// out = exp(x), accurate to a few ulp over the full double range.
  void (*exp)(std::size_t n, const double* x, double* out);
  void (*tanh)(std::size_t n, const double* x, double* out);
};

const KernelTable& scalar_kernels();
/// Null when the AVX2 variant was not compiled in.
const KernelTable* avx2_kernels();

bool cpu_supports(Level level);
Level detected_level();
Level active_level();
/// Throws ConfigError if the level is not available on this machine/build.
void set_level(Level level);

const KernelTable& kernels(Level level);
const KernelTable& active();

}  // namespace midpc::simd
