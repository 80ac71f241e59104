#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "midpc/simd/kernels.hpp"
#include "midpc/util/errors.hpp"
#include "midpc/util/rng.hpp"

namespace midpc::simd {
namespace {

std::vector<double> random_vector(Rng& rng, std::size_t n, double lo = -2.0, double hi = 2.0) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

class Avx2Equivalence : public ::testing::Test {
 protected:
  void SetUp() override {
    if (!cpu_supports(Level::Avx2)) GTEST_SKIP() << "AVX2 not available";
    fast_ = avx2_kernels();
  }
  const KernelTable& ref_ = scalar_kernels();
  const KernelTable* fast_ = nullptr;
};

TEST_F(Avx2Equivalence, GemmMatchesScalarOverShapesAndLayouts) {
  Rng rng(7);
  const std::size_t dims[] = {1, 2, 5, 6, 7, 8, 9, 13, 31, 97, 130};
  for (std::size_t m : dims) {
    for (std::size_t n : {std::size_t{1}, std::size_t{8}, std::size_t{11}, std::size_t{120}}) {
      for (std::size_t k : {std::size_t{1}, std::size_t{3}, std::size_t{22}, std::size_t{300}}) {
        for (int layout = 0; layout < 4; ++layout) {
          const auto a = random_vector(rng, m * k);
          const auto b = random_vector(rng, k * n);
          const ConstMatrixRef ar = (layout & 1) ? transposed(a.data(), m) : row_major(a.data(), k);
          const ConstMatrixRef br = (layout & 2) ? transposed(b.data(), k) : row_major(b.data(), n);
          const double beta = layout == 3 ? 0.5 : (layout == 2 ? 1.0 : 0.0);
          std::vector<double> c0 = random_vector(rng, m * n);
          std::vector<double> c1 = c0;
          ref_.gemm(m, n, k, 1.25, ar, br, beta, c0.data(), n);
          fast_->gemm(m, n, k, 1.25, ar, br, beta, c1.data(), n);
          for (std::size_t i = 0; i < m * n; ++i)
            ASSERT_NEAR(c0[i], c1[i], 1e-12 * (1.0 + std::abs(c0[i])) * static_cast<double>(k))
                << "m=" << m << " n=" << n << " k=" << k << " layout=" << layout;
        }
      }
    }
  }
}

TEST_F(Avx2Equivalence, GemmBetaZeroIgnoresGarbageInOutput) {
  std::vector<double> a{1, 2, 3, 4}, b{1, 0, 0, 1};
  std::vector<double> c(4, std::nan(""));
  fast_->gemm(2, 2, 2, 1.0, row_major(a.data(), 2), row_major(b.data(), 2), 0.0, c.data(), 2);
  EXPECT_EQ(c, (std::vector<double>{1, 2, 3, 4}));
}

TEST_F(Avx2Equivalence, ElementwiseKernelsMatchScalar) {
  Rng rng(11);
  for (std::size_t n : {std::size_t{0}, std::size_t{1}, std::size_t{3}, std::size_t{4},
                        std::size_t{17}, std::size_t{1000}}) {
    const auto x = random_vector(rng, n);
    const auto y = random_vector(rng, n);
    std::vector<double> o0(n), o1(n);
    for (auto op : {&KernelTable::add, &KernelTable::sub, &KernelTable::mul}) {
      (ref_.*op)(n, x.data(), y.data(), o0.data());
      (fast_->*op)(n, x.data(), y.data(), o1.data());
      EXPECT_EQ(o0, o1);
    }
    ref_.scale(n, -0.3, x.data(), o0.data());
    fast_->scale(n, -0.3, x.data(), o1.data());
    EXPECT_EQ(o0, o1);

    std::vector<double> y0 = y, y1 = y;
    ref_.axpy(n, 0.7, x.data(), y0.data());
    fast_->axpy(n, 0.7, x.data(), y1.data());
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(y0[i], y1[i], 1e-15);

    EXPECT_NEAR(ref_.dot(n, x.data(), y.data()), fast_->dot(n, x.data(), y.data()),
                1e-13 * static_cast<double>(n + 1));
  }
}

TEST_F(Avx2Equivalence, RowBroadcastAndColumnSumsMatchScalar) {
  Rng rng(3);
  const std::size_t rows = 37, cols = 13;
  const auto x = random_vector(rng, rows * cols);
  const auto row = random_vector(rng, cols);
  std::vector<double> a = x, b = x;
  ref_.add_row(rows, cols, row.data(), a.data());
  fast_->add_row(rows, cols, row.data(), b.data());
  EXPECT_EQ(a, b);
  std::vector<double> s0(cols, 1.0), s1(cols, 1.0);
  ref_.accumulate_column_sums(rows, cols, x.data(), s0.data());
  fast_->accumulate_column_sums(rows, cols, x.data(), s1.data());
  EXPECT_EQ(s0, s1);
}

TEST_F(Avx2Equivalence, ExpAgreesWithLibmToFewUlp) {
  Rng rng(5);
  std::vector<double> x = random_vector(rng, 20000, -750.0, 720.0);
  auto small = random_vector(rng, 20000, -1.0, 1.0);
  x.insert(x.end(), small.begin(), small.end());
  x.insert(x.end(), {0.0, -0.0, 1e-300, -1e-300, 708.0, -708.0, 709.5, -745.5, INFINITY,
                     -INFINITY, std::nan("")});
  std::vector<double> o0(x.size()), o1(x.size());
  ref_.exp(x.size(), x.data(), o0.data());
  fast_->exp(x.size(), x.data(), o1.data());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (std::isnan(o0[i])) {
      EXPECT_TRUE(std::isnan(o1[i]));
    } else if (std::isinf(o0[i])) {
      EXPECT_EQ(o0[i], o1[i]);
    } else {
      EXPECT_NEAR(o1[i], o0[i], 4e-16 * o0[i] + 1e-300) << "x=" << x[i];
    }
  }
}

TEST_F(Avx2Equivalence, TanhAgreesWithLibmToFewUlp) {
  Rng rng(6);
  std::vector<double> x = random_vector(rng, 20000, -25.0, 25.0);
  auto small = random_vector(rng, 20000, -0.7, 0.7);
  x.insert(x.end(), small.begin(), small.end());
  x.insert(x.end(), {0.0, -0.0, 1e-12, -1e-12, 0.55, -0.55, 0.5499999, 400.0, -1e6, INFINITY,
                     -INFINITY, std::nan("")});
  std::vector<double> o0(x.size()), o1(x.size());
  ref_.tanh(x.size(), x.data(), o0.data());
  fast_->tanh(x.size(), x.data(), o1.data());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (std::isnan(o0[i])) {
      EXPECT_TRUE(std::isnan(o1[i]));
    } else {
      EXPECT_NEAR(o1[i], o0[i], 6e-16 * std::abs(o0[i])) << "x=" << x[i];
    }
  }
  EXPECT_TRUE(std::signbit(o1[o1.size() - 11]));  // tanh(-0) = -0
}

TEST(Dispatch, LevelCanBeForcedAndRestored) {
  const Level original = active_level();
  set_level(Level::Scalar);
  EXPECT_EQ(active_level(), Level::Scalar);
  EXPECT_EQ(&active(), &scalar_kernels());
  if (cpu_supports(Level::Avx2)) {
    set_level(Level::Avx2);
    EXPECT_EQ(active_level(), Level::Avx2);
  } else {
    EXPECT_THROW(set_level(Level::Avx2), ConfigError);
  }
  set_level(original);
  EXPECT_EQ(to_string(Level::Avx2), "avx2");
}

}  // namespace
}  // namespace midpc::simd
