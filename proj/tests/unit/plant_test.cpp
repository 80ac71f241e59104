#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "midpc/autodiff/ops.hpp"
#include "midpc/plant/scenario.hpp"
#include "midpc/plant/system.hpp"
#include "midpc/util/errors.hpp"

namespace midpc::plant {
namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

TEST(Step, OriginIsFixedPoint) {
  const auto b = make_thermal_benchmark();
  EXPECT_EQ(step(b.model, vec({0, 0}), vec({0, 0}), vec({0}), vec({0, 0})), vec({0, 0}));
}

TEST(Step, FreeResponse) {
  const auto b = make_thermal_benchmark();
  const auto x = step(b.model, vec({1, 1}), vec({0, 0}), vec({0}), vec({0, 0}));
  EXPECT_NEAR(x(0), 0.9993, 1e-12);
  EXPECT_NEAR(x(1), 0.9956, 1e-12);
}

TEST(Step, InputResponse) {
  const auto b = make_thermal_benchmark();
  const auto x = step(b.model, vec({0, 0}), vec({1, 1}), vec({2}), vec({0, 0}));
  EXPECT_NEAR(x(0), 0.075, 1e-12);
  EXPECT_NEAR(x(1), 0.24, 1e-12);
}

TEST(Step, DimensionMismatchThrows) {
  const auto b = make_thermal_benchmark();
  EXPECT_THROW(step(b.model, vec({0, 0, 0}), vec({0, 0}), vec({0}), vec({0, 0})), ShapeError);
  EXPECT_THROW(step(b.model, vec({0, 0}), vec({0}), vec({0}), vec({0, 0})), ShapeError);
}

TEST(Step, Linearity) {
  const auto b = make_thermal_benchmark();
  Rng rng(3);
  auto rand = [&](int n) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v(i) = rng.uniform(-5, 5);
    return v;
  };
  for (int trial = 0; trial < 100; ++trial) {
    const auto x1 = rand(2), x2 = rand(2), u1 = rand(2), u2 = rand(2);
    const auto e1 = rand(1), e2 = rand(1), d1 = rand(2), d2 = rand(2);
    const Eigen::VectorXd both = step(b.model, x1 + x2, u1 + u2, e1 + e2, d1 + d2);
    const Eigen::VectorXd sum = step(b.model, x1, u1, e1, d1) + step(b.model, x2, u2, e2, d2);
    EXPECT_LT((both - sum).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Step, TapeMatchesEigen) {
  const auto b = make_thermal_benchmark();
  ad::Tape tape;
  const auto x = tape.constant(ad::Tensor::matrix({{1.5, 2.0}, {7.0, 0.1}}));
  const auto u = tape.constant(ad::Tensor::matrix({{0.3, 4.0}, {1.0, 0.0}}));
  const auto e = tape.constant(ad::Tensor::matrix({{2.0}, {3.0}}));
  const auto d = tape.constant(ad::Tensor::matrix({{6.0, 0.0}, {0.5, 12.0}}));
  const auto next = tape.value(step(tape, b.model, x, u, e, d));
  for (std::size_t row = 0; row < 2; ++row) {
    const auto ref = step(b.model, to_matrix(tape.value(x)).row(row).transpose(),
                          to_matrix(tape.value(u)).row(row).transpose(),
                          to_matrix(tape.value(e)).row(row).transpose(),
                          to_matrix(tape.value(d)).row(row).transpose());
    EXPECT_NEAR(next(row, 0), ref(0), 1e-14);
    EXPECT_NEAR(next(row, 1), ref(1), 1e-14);
  }
  EXPECT_THROW(step(tape, b.model, x, e, e, d), ShapeError);
}

TEST(Benchmark, Parameters) {
  const auto b = make_thermal_benchmark();
  EXPECT_DOUBLE_EQ(b.model.A(0, 0), 0.9983);
  EXPECT_DOUBLE_EQ(b.model.A(0, 1), 0.001);
  EXPECT_DOUBLE_EQ(b.model.A(1, 0), 0.0);
  EXPECT_NEAR(b.model.A(1, 1), 0.9956, 1e-15);
  EXPECT_DOUBLE_EQ(b.model.B_delta(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(b.model.B_delta(1, 0), 0.0825);
  EXPECT_DOUBLE_EQ(b.model.E(0, 0), -0.0833);
  EXPECT_DOUBLE_EQ(b.model.E(1, 1), -0.0833);
  EXPECT_DOUBLE_EQ(b.weights.rho(0, 0), 0.1);
  EXPECT_DOUBLE_EQ(b.weights.R(1, 1), 0.5);
  EXPECT_DOUBLE_EQ(b.weights.c_x, 25.0);
  EXPECT_DOUBLE_EQ(b.model.sampling_period, 300.0);
  EXPECT_EQ(b.constraints.feasible_integers[0], (std::vector<int>{0, 1, 2, 3}));
  EXPECT_TRUE(b.constraints.consecutive(0));
  EXPECT_NO_THROW(b.model.validate());
  EXPECT_NO_THROW(b.constraints.validate(b.model));
  EXPECT_NO_THROW(b.weights.validate(b.model));
}

TEST(Benchmark, SchurStableWithMonotoneDecay) {
  const auto b = make_thermal_benchmark();
  const Eigen::EigenSolver<Eigen::MatrixXd> eig(b.model.A);
  EXPECT_LT(eig.eigenvalues().cwiseAbs().maxCoeff(), 1.0);
  Eigen::VectorXd x = vec({8.0, 3.0});
  for (int k = 0; k < 500; ++k) {
    const auto next = step(b.model, x, vec({0, 0}), vec({0}), vec({0, 0}));
    EXPECT_LT(next.cwiseAbs().maxCoeff(), x.cwiseAbs().maxCoeff());
    x = next;
  }
}

TEST(Benchmark, ValidationRejectsBadConfigs) {
  auto b = make_thermal_benchmark();
  b.constraints.feasible_integers = {{0, 2, 1}};
  EXPECT_THROW(b.constraints.validate(b.model), ConfigError);
  b = make_thermal_benchmark();
  b.weights.R(0, 0) = -1.0;
  EXPECT_THROW(b.weights.validate(b.model), ConfigError);
  b = make_thermal_benchmark();
  b.constraints.feasible_integers = {{0, 1, 3}};
  EXPECT_FALSE(b.constraints.consecutive(0));
}

TEST(Sampling, InitialStateUniform) {
  const auto b = make_thermal_benchmark();
  Rng rng(17);
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const auto x = sample_initial_state(rng, b.constraints);
    ASSERT_TRUE((x.array() >= b.constraints.x_min.array()).all());
    ASSERT_TRUE((x.array() <= b.constraints.x_max.array()).all());
    mean += x / n;
  }
  EXPECT_NEAR(mean(0), 4.2, 0.02 * 4.2);
  EXPECT_NEAR(mean(1), 1.8, 0.02 * 1.8);
  Rng a(5), c(5);
  for (int i = 0; i < 10; ++i)
    EXPECT_EQ(sample_initial_state(a, b.constraints), sample_initial_state(c, b.constraints));
}

TEST(Sampling, BetaDisturbance) {
  Rng rng(21);
  const auto d = sample_disturbance_d1(rng, 100000);
  double mean = 0.0;
  std::vector<int> bins(7, 0);
  for (double v : d) {
    ASSERT_GE(v, 0.0);
    ASSERT_LE(v, 7.0);
    mean += v / static_cast<double>(d.size());
    ++bins[std::min(6, static_cast<int>(v))];
  }
  EXPECT_NEAR(mean, 2.1, 0.02 * 2.1);
  // Beta(0.6, 1.4) has a strictly decreasing density on (0, 1).
  for (int i = 1; i < 7; ++i) EXPECT_LT(bins[i], bins[i - 1]) << "bin " << i;
}

TEST(Sampling, PeakDisturbanceStructure) {
  Rng rng(8);
  const DisturbanceConfig cfg;
  const auto d = sample_disturbance_d2(rng, 20000, cfg);
  ASSERT_EQ(d.size(), 20000u);
  std::size_t zeros = 0;
  std::size_t i = 0;
  bool first = true;
  while (i < d.size()) {
    if (d[i] == 0.0) {
      ++zeros;
      ++i;
      first = false;
      continue;
    }
    std::size_t j = i;
    while (j < d.size() && d[j] == d[i]) ++j;
    const bool truncated = first || j == d.size();
    EXPECT_GE(d[i], 1.0);
    EXPECT_LE(d[i], 16.0);
    if (!truncated) {
      EXPECT_GE(j - i, 2u);
      EXPECT_LE(j - i, 5u);
    }
    first = false;
    i = j;
  }
  EXPECT_GT(zeros, d.size() / 2);
  Rng a(8);
  EXPECT_EQ(sample_disturbance_d2(a, 20000, cfg), d);
}

TEST(Dataset, SizesAndWidths) {
  const auto b = make_thermal_benchmark();
  const auto data = build_dataset(42, 240, 40, 10, b.constraints);
  EXPECT_EQ(data.train.size(), 240u);
  EXPECT_EQ(data.dev.size(), 40u);
  for (const auto& s : data.train.samples) EXPECT_EQ(s.xi().size(), 2 + 2 * 10);
}

TEST(Dataset, DefaultSizes) {
  const auto b = make_thermal_benchmark();
  const auto data = build_dataset(1, 24000, 4000, 2, b.constraints);
  EXPECT_EQ(data.train.size(), 24000u);
  EXPECT_EQ(data.dev.size(), 4000u);
}

TEST(Dataset, TrainAndDevStreamsAreDisjoint) {
  const auto b = make_thermal_benchmark();
  const auto data = build_dataset(42, 2000, 2000, 5, b.constraints);
  std::set<std::pair<double, double>> train_x0;
  for (const auto& s : data.train.samples) train_x0.insert({s.x0(0), s.x0(1)});
  for (const auto& s : data.dev.samples) EXPECT_EQ(train_x0.count({s.x0(0), s.x0(1)}), 0u);
}

TEST(Dataset, IndependentOfPartitioning) {
  const auto b = make_thermal_benchmark();
  const auto big = generate_split(9, Split::Train, 50, 4, b.constraints, {});
  const auto small = generate_split(9, Split::Train, 20, 4, b.constraints, {});
  for (std::size_t i = 0; i < 20; ++i) {
    EXPECT_EQ(big.samples[i].x0, small.samples[i].x0);
    EXPECT_EQ(big.samples[i].d, small.samples[i].d);
  }
}

TEST(Dataset, CsvRoundTripIsExact) {
  const auto b = make_thermal_benchmark();
  const auto data = generate_split(77, Split::Dev, 30, 6, b.constraints, {});
  std::stringstream ss;
  write_dataset_csv(ss, data);
  const auto text = ss.str();
  const auto back = read_dataset_csv(ss);
  EXPECT_EQ(back.horizon, 6u);
  EXPECT_EQ(back.seed, 77u);
  EXPECT_EQ(back.split, Split::Dev);
  ASSERT_EQ(back.size(), 30u);
  for (std::size_t i = 0; i < 30; ++i) {
    EXPECT_EQ(back.samples[i].x0, data.samples[i].x0);
    EXPECT_EQ(back.samples[i].d, data.samples[i].d);
  }
  std::stringstream again;
  write_dataset_csv(again, back);
  EXPECT_EQ(again.str(), text);
}

TEST(Dataset, CsvRejectsMalformedRows) {
  std::stringstream ss("# midpc-dataset horizon=1 seed=0 split=train count=1\nx1,x2,d1_0,d2_0\n1,2,3\n");
  EXPECT_THROW(read_dataset_csv(ss), ShapeError);
  std::stringstream bad("x1,x2\n");
  EXPECT_THROW(read_dataset_csv(bad), ConfigError);
}

}  // namespace
}  // namespace midpc::plant
