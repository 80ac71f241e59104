#include <cmath>

#include "midpc/simd/kernels.hpp"

namespace midpc::simd {
namespace {

void gemm_scalar(std::size_t m, std::size_t n, std::size_t k, double alpha, ConstMatrixRef a,
                 ConstMatrixRef b, double beta, double* c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    double* c_row = c + i * ldc;
    if (beta == 0.0) {
      for (std::size_t j = 0; j < n; ++j) c_row[j] = 0.0;
    } else if (beta != 1.0) {
      for (std::size_t j = 0; j < n; ++j) c_row[j] *= beta;
    }
    for (std::size_t p = 0; p < k; ++p) {
      const double scaled = alpha * a(i, p);
      for (std::size_t j = 0; j < n; ++j) c_row[j] += scaled * b(p, j);
    }
  }
}

void axpy_scalar(std::size_t n, double alpha, const double* x, double* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

double dot_scalar(std::size_t n, const double* x, const double* y) {
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += x[i] * y[i];
  return sum;
}

void add_scalar(std::size_t n, const double* x, const double* y, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] + y[i];
}

void sub_scalar(std::size_t n, const double* x, const double* y, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] - y[i];
}

void mul_scalar(std::size_t n, const double* x, const double* y, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] * y[i];
}

void scale_scalar(std::size_t n, double alpha, const double* x, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = alpha * x[i];
}

void add_row_scalar(std::size_t rows, std::size_t cols, const double* row, double* inout) {
  for (std::size_t i = 0; i < rows; ++i) {
    double* r = inout + i * cols;
    for (std::size_t j = 0; j < cols; ++j) r[j] += row[j];
  }
}

void column_sums_scalar(std::size_t rows, std::size_t cols, const double* x, double* out) {
  for (std::size_t i = 0; i < rows; ++i) {
    const double* r = x + i * cols;
    for (std::size_t j = 0; j < cols; ++j) out[j] += r[j];
  }
}

void exp_scalar(std::size_t n, const double* x, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(x[i]);
}

void tanh_scalar(std::size_t n, const double* x, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::tanh(x[i]);
}

constexpr KernelTable kScalarTable{
    gemm_scalar, axpy_scalar,    dot_scalar,         add_scalar, sub_scalar, mul_scalar,
    scale_scalar, add_row_scalar, column_sums_scalar, exp_scalar, tanh_scalar,
};

}  // namespace

const KernelTable& scalar_kernels() { return kScalarTable; }

}  // namespace midpc::simd
