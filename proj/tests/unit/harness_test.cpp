#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>
#include <stdexcept>

#include "midpc/harness/harness.hpp"
#include "midpc/oracle/miqp.hpp"
#include "midpc/util/errors.hpp"
#include "midpc/util/rng.hpp"

namespace midpc::harness {
namespace {

using rounding::Strategy;

policy::Policy make_policy(Strategy s, std::size_t horizon, std::uint64_t seed = 3) {
  policy::PolicyConfig cfg;
  cfg.strategy = s;
  cfg.horizon = horizon;
  cfg.seed = seed;
  cfg.width = 32;
  return policy::Policy(cfg, policy::PolicyDims::from(plant::make_thermal_benchmark()));
}

Scenario zero_scenario(Eigen::Vector2d x0, std::size_t n) {
  return {x0, Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), 2)};
}

// A hand-made run with constant state and inputs.
ClosedLoopRun constant_run(std::size_t n, Eigen::Vector2d x, Eigen::Vector2d u, double delta) {
  ClosedLoopRun r;
  r.horizon = 1;
  r.x = x.transpose().replicate(static_cast<Eigen::Index>(n) + 1, 1);
  r.u = u.transpose().replicate(static_cast<Eigen::Index>(n), 1);
  r.delta = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(n), 1, delta);
  r.d = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n) + 1, 2);
  r.inference_s.assign(n, 0.0);
  return r;
}

class ThrowingController final : public Controller {
 public:
  explicit ThrowingController(std::size_t at) : at_(at) {}
  std::string id() const override { return "throwing"; }
  std::size_t horizon() const override { return 1; }
  ControlMove act(const Eigen::VectorXd&, const Eigen::MatrixXd&) override {
    if (calls_++ == at_) throw std::runtime_error("boom");
    return {Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(1)};
  }

 private:
  std::size_t at_, calls_ = 0;
};

class FixedController final : public Controller {
 public:
  explicit FixedController(ControlMove m) : m_(std::move(m)) {}
  std::string id() const override { return "fixed"; }
  std::size_t horizon() const override { return 1; }
  ControlMove act(const Eigen::VectorXd&, const Eigen::MatrixXd&) override { return m_; }

 private:
  ControlMove m_;
};

TEST(ClosedLoop, ZeroControllerAtOriginStaysAtZero) {
  const auto b = plant::make_thermal_benchmark();
  ZeroController c(2, 1, 3);
  const auto run = closed_loop(c, b, zero_scenario({0, 0}, 25), 25);
  EXPECT_FALSE(run.failed);
  EXPECT_EQ(run.steps(), 25u);
  EXPECT_EQ(run.x.rows(), 26);
  EXPECT_EQ(run.d.rows(), 28);
  EXPECT_EQ(run.x.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(run.u.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(run.delta.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(run.inference_s.size(), 25u);
}

TEST(ClosedLoop, TraceSatisfiesDynamics) {
  const auto b = plant::make_thermal_benchmark();
  const auto p = make_policy(Strategy::SigmoidSte, 4);
  PolicyController c(p);
  EXPECT_EQ(c.id(), "sigmoid_ste_N4");
  const auto sc = make_test_scenarios(5, 1, 30, b.constraints).front();
  const auto run = closed_loop(c, b, sc, 30);
  ASSERT_FALSE(run.failed) << run.failure;
  for (Eigen::Index k = 0; k < 30; ++k) {
    const Eigen::VectorXd next = plant::step(b.model, run.x.row(k).transpose(), run.u.row(k).transpose(),
                                             run.delta.row(k).transpose(), run.d.row(k).transpose());
    EXPECT_EQ((next - run.x.row(k + 1).transpose()).cwiseAbs().maxCoeff(), 0.0);
    const double v = run.delta(k, 0);
    EXPECT_TRUE(v == 0 || v == 1 || v == 2 || v == 3);
  }
}

TEST(ClosedLoop, PolicyControllerIsDeterministic) {
  const auto b = plant::make_thermal_benchmark();
  const auto sc = make_test_scenarios(9, 1, 40, b.constraints).front();
  for (auto s : {Strategy::SigmoidSte, Strategy::SoftmaxSte, Strategy::LearnableThreshold}) {
    const auto p = make_policy(s, 3);
    PolicyController c1(p), c2(p);
    const auto a = closed_loop(c1, b, sc, 40, 1);
    const auto z = closed_loop(c2, b, sc, 40, 1);
    EXPECT_EQ(a.x, z.x);
    EXPECT_EQ(a.u, z.u);
    EXPECT_EQ(a.delta, z.delta);
  }
}

TEST(ClosedLoop, ControllerSeesShiftedPaddedWindow) {
  const auto b = plant::make_thermal_benchmark();
  struct Recorder final : Controller {
    std::vector<Eigen::MatrixXd> seen;
    std::string id() const override { return "rec"; }
    std::size_t horizon() const override { return 3; }
    ControlMove act(const Eigen::VectorXd&, const Eigen::MatrixXd& w) override {
      seen.push_back(w);
      return {Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(1)};
    }
  } rec;
  Scenario sc{Eigen::Vector2d(1, 1), Eigen::MatrixXd(4, 2)};
  sc.d << 1, 2, 3, 4, 5, 6, 7, 8;
  closed_loop(rec, b, sc, 4);
  ASSERT_EQ(rec.seen.size(), 4u);
  EXPECT_EQ(rec.seen[0].rows(), 3);
  EXPECT_EQ(rec.seen[1](0, 0), 3.0);
  EXPECT_EQ(rec.seen[3](0, 1), 8.0);
  EXPECT_EQ(rec.seen[3](1, 0), 0.0);
  EXPECT_EQ(rec.seen[3](2, 1), 0.0);
}

TEST(ClosedLoop, OracleMatchesBruteForceRecedingHorizon) {
  const auto b = plant::make_thermal_benchmark();
  OracleController c(b, 2, false);
  EXPECT_EQ(c.id(), "oracle_hard_N2");
  const auto run = closed_loop(c, b, zero_scenario({2, 1}, 10), 10);
  ASSERT_FALSE(run.failed) << run.failure;
  ASSERT_EQ(c.diagnostics().size(), 10u);
  Eigen::VectorXd x = Eigen::Vector2d(2, 1);
  for (Eigen::Index k = 0; k < 10; ++k) {
    const auto p = oracle::condense(b, x, Eigen::MatrixXd::Zero(2, 2), 2);
    const auto bf = oracle::brute_force(p);
    ASSERT_EQ(bf.status, oracle::SolveStatus::Optimal);
    EXPECT_NEAR(c.diagnostics()[static_cast<std::size_t>(k)].cost, bf.cost, 1e-9);
    EXPECT_NEAR((run.u.row(k).transpose() - bf.z.head(2)).cwiseAbs().maxCoeff(), 0.0, 1e-6);
    EXPECT_EQ(run.delta(k, 0), bf.z(2));
    x = plant::step(b.model, x, bf.z.head(2), bf.z.segment(2, 1), Eigen::Vector2d::Zero());
  }
}

TEST(ClosedLoop, FailureKeepsPartialTrace) {
  const auto b = plant::make_thermal_benchmark();
  ThrowingController c(4);
  const auto run = closed_loop(c, b, zero_scenario({1, 1}, 10), 10);
  EXPECT_TRUE(run.failed);
  EXPECT_EQ(run.failed_at, 4u);
  EXPECT_EQ(run.failure, "boom");
  EXPECT_EQ(run.steps(), 4u);
  EXPECT_EQ(run.x.rows(), 5);
  EXPECT_EQ(run.inference_s.size(), 4u);
}

TEST(ClosedLoop, RejectsInfeasibleMoves) {
  const auto b = plant::make_thermal_benchmark();
  FixedController bad_int({Eigen::VectorXd::Zero(2), Eigen::VectorXd::Constant(1, 1.5)});
  auto run = closed_loop(bad_int, b, zero_scenario({1, 1}, 3), 3);
  EXPECT_TRUE(run.failed);
  EXPECT_EQ(run.failed_at, 0u);
  FixedController bad_size({Eigen::VectorXd::Zero(3), Eigen::VectorXd::Zero(1)});
  run = closed_loop(bad_size, b, zero_scenario({1, 1}, 3), 3);
  EXPECT_TRUE(run.failed);
  EXPECT_THROW(closed_loop(bad_size, b, zero_scenario({1, 1}, 2), 3), ContractError);
}

TEST(ClosedLoop, BatchMatchesSequentialRuns) {
  const auto b = plant::make_thermal_benchmark();
  const auto p = make_policy(Strategy::SoftmaxSte, 3);
  const auto scenarios = make_test_scenarios(4, 5, 20, b.constraints);
  auto factory = [&] { return std::make_unique<PolicyController>(p); };
  const auto one = closed_loop_batch(factory, b, scenarios, 20, 1, 8);
  const auto three = closed_loop_batch(factory, b, scenarios, 20, 3, 8);
  ASSERT_EQ(one.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(one[i].x, three[i].x);
    EXPECT_EQ(one[i].seed, three[i].seed);
    EXPECT_EQ(one[i].x.row(0).transpose(), scenarios[i].x0);
  }
}

TEST(Scenarios, SharedAndIndependentTraces) {
  const auto c = plant::make_thermal_benchmark().constraints;
  const auto shared = make_test_scenarios(2, 3, 50, c);
  EXPECT_EQ(shared[0].d, shared[2].d);
  EXPECT_NE(shared[0].x0, shared[1].x0);
  const auto own = make_test_scenarios(2, 3, 50, c, false);
  EXPECT_NE(own[0].d, own[1].d);
  EXPECT_EQ(own[1].x0, shared[1].x0);
  EXPECT_EQ(make_test_scenarios(2, 3, 50, c)[1].d, shared[1].d);
  EXPECT_THROW(make_test_scenarios(2, 0, 50, c), ConfigError);
}

TEST(Metrics, MeanStepwiseLoss) {
  const auto b = plant::make_thermal_benchmark();
  EXPECT_EQ(mean_stepwise_loss({constant_run(7, b.weights.r, {0, 0}, 0)}, b.weights), 0.0);
  // ||[5.2,1.8]-r||^2 + 0.5*||[1,0]||^2 + 0.1*1^2 = 1 + 0.5 + 0.1
  auto run = constant_run(1, {5.2, 1.8}, {1, 0}, 1);
  EXPECT_NEAR(mean_stepwise_loss({run}, b.weights), 1.6, 1e-12);
  auto two = constant_run(3, b.weights.r, {0, 0}, 0);
  two.x.row(1) = Eigen::RowVector2d(5.2, 1.8);
  two.u.row(1) = Eigen::RowVector2d(1, 0);
  two.delta(1, 0) = 1;
  EXPECT_NEAR(mean_stepwise_loss({two}, b.weights), 1.6 / 3.0, 1e-12);
  EXPECT_THROW(mean_stepwise_loss({}, b.weights), ContractError);
  EXPECT_THROW(mean_stepwise_loss({run, two}, b.weights), ContractError);
}

TEST(Metrics, RelativeSuboptimality) {
  const auto b = plant::make_thermal_benchmark();
  const auto o = constant_run(4, {5.2, 1.8}, {0, 0}, 0);
  EXPECT_EQ(relative_suboptimality({o}, {o}, b.weights), 0.0);
  const auto p = constant_run(4, {5.2, 1.8}, {1, 0}, 1);
  EXPECT_NEAR(relative_suboptimality({p}, {o}, b.weights), 0.6, 1e-12);
  auto shifted = o;
  shifted.x(0, 0) = 5.0;
  EXPECT_THROW(relative_suboptimality({p}, {shifted}, b.weights), ContractError);
  auto other_d = o;
  other_d.d(2, 1) = 0.5;
  EXPECT_THROW(relative_suboptimality({p}, {other_d}, b.weights), ContractError);
  EXPECT_THROW(relative_suboptimality({p, p}, {o}, b.weights), ContractError);
  EXPECT_THROW(relative_suboptimality({p}, {constant_run(5, {5.2, 1.8}, {0, 0}, 0)}, b.weights),
               ContractError);
}

TEST(Metrics, InvariantToRunOrder) {
  const auto b = plant::make_thermal_benchmark();
  const auto p = make_policy(Strategy::LearnableThreshold, 2);
  const auto scenarios = make_test_scenarios(3, 4, 15, b.constraints, false);
  std::vector<ClosedLoopRun> runs;
  for (const auto& s : scenarios) {
    PolicyController c(p);
    runs.push_back(closed_loop(c, b, s, 15));
  }
  auto reversed = runs;
  std::reverse(reversed.begin(), reversed.end());
  EXPECT_NEAR(mean_stepwise_loss(runs, b.weights), mean_stepwise_loss(reversed, b.weights), 1e-12);
  const auto v1 = violation_stats(runs, b.constraints), v2 = violation_stats(reversed, b.constraints);
  EXPECT_EQ(v1.state_max_excess, v2.state_max_excess);
  EXPECT_EQ(v1.input_violating_fraction, v2.input_violating_fraction);
}

TEST(Metrics, ViolationStats) {
  const auto b = plant::make_thermal_benchmark();
  auto clean = violation_stats({constant_run(10, {4, 2}, {1, 1}, 0)}, b.constraints);
  EXPECT_EQ(clean.state_max_excess, 0.0);
  EXPECT_EQ(clean.input_max_excess, 0.0);
  EXPECT_EQ(clean.state_violating_fraction, 0.0);

  auto run = constant_run(100, {4, 2}, {1, 1}, 0);
  run.x(50, 0) = 8.5;
  const auto s = violation_stats({run}, b.constraints);
  EXPECT_EQ(s.steps, 100u);
  EXPECT_NEAR(s.state_max_excess, 0.1, 1e-12);
  EXPECT_NEAR(s.state_violating_fraction, 0.01, 1e-15);
  EXPECT_EQ(s.constraints[0].name, "x1_max");
  EXPECT_NEAR(s.constraints[0].mean_excess, 0.001, 1e-12);
  EXPECT_EQ(s.input_max_excess, 0.0);

  run = constant_run(10, {4, 2}, {1, 1}, 0);
  run.u.row(3) = Eigen::RowVector2d(4.1, 4.1);
  const auto in = violation_stats({run}, b.constraints);
  EXPECT_NEAR(in.input_max_excess, 0.2, 1e-12);
  EXPECT_NEAR(in.input_violating_fraction, 0.1, 1e-15);
  EXPECT_EQ(in.constraints.back().name, "u_sum_max");
  EXPECT_EQ(in.state_max_excess, 0.0);
}

TEST(Metrics, ErrorTraces) {
  const auto o = constant_run(3, {4, 2}, {0, 0}, 0);
  auto p = o;
  p.x(2, 1) = 1.5;
  const auto e = error_traces({p}, {o});
  ASSERT_EQ(e.size(), 1u);
  EXPECT_EQ(e[0](2, 1), 0.5);
  EXPECT_EQ(e[0].cwiseAbs().sum(), 0.5);
}

TEST(Metrics, OraclePlanIsNoWorseThanPolicyPlan) {
  const auto b = plant::make_thermal_benchmark();
  const std::size_t N = 3;
  const auto p = make_policy(Strategy::SigmoidSte, N, 17);
  Rng rng(21);
  for (int trial = 0; trial < 15; ++trial) {
    const auto s = plant::sample_scenario(rng, b.constraints, N);
    const auto problem = oracle::condense(b, s.x0, s.d, N, true);
    const auto sol = oracle::branch_and_bound(problem);
    ASSERT_EQ(sol.status, oracle::SolveStatus::Optimal);

    // Roll the policy over the prediction window, padding the lookahead.
    PolicyController c(p);
    Eigen::VectorXd plan(problem.n_controls());
    Eigen::VectorXd x = s.x0;
    const Eigen::Index nd = 2, nz = 3;
    for (Eigen::Index k = 0; k < static_cast<Eigen::Index>(N); ++k) {
      Eigen::MatrixXd window = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(N), nd);
      window.topRows(static_cast<Eigen::Index>(N) - k) = s.d.bottomRows(static_cast<Eigen::Index>(N) - k);
      auto m = c.act(x, window);
      // An untrained policy may leave the input set; project so the plan is admissible.
      m.u = m.u.cwiseMax(0.0);
      if (m.u.sum() > b.constraints.u_sum_max) m.u *= b.constraints.u_sum_max / m.u.sum();
      plan.segment(k * nz, 2) = m.u;
      plan(k * nz + 2) = m.delta(0);
      x = plant::step(b.model, x, m.u, m.delta, s.d.row(k).transpose());
    }
    Eigen::VectorXd z = Eigen::VectorXd::Zero(problem.dim());
    z.head(problem.n_controls()) = plan;
    z.tail(problem.n_slack) = Eigen::VectorXd::Constant(problem.n_slack, 1e3);
    ASSERT_LE(problem.violation(z), 1e-9);
    EXPECT_LE(sol.cost, problem.plan_objective(plan) + 1e-6);
  }
}

TEST(Report, SummarizeAndCsv) {
  const auto b = plant::make_thermal_benchmark();
  const auto o = constant_run(4, {5.2, 1.8}, {0, 0}, 0);
  const auto p = constant_run(4, {5.2, 1.8}, {1, 0}, 1);
  const std::vector<ClosedLoopRun> oracle_runs{o};
  const auto rp = summarize("policy", {p}, b, &oracle_runs, 1234);
  const auto ro = summarize("oracle", {o}, b);
  EXPECT_NEAR(rp.l_mean, 1.6, 1e-12);
  ASSERT_TRUE(rp.rsm.has_value());
  EXPECT_NEAR(*rp.rsm, 0.6, 1e-12);
  EXPECT_FALSE(ro.rsm.has_value());
  EXPECT_EQ(*rp.ntp, 1234u);

  std::ostringstream csv;
  write_metrics_csv(csv, {ro, rp});
  const std::string text = csv.str();
  EXPECT_EQ(text.substr(0, text.find('\n')), "metric,oracle,policy");
  EXPECT_NE(text.find("l_mean,1.0000,1.6000\n"), std::string::npos);
  EXPECT_NE(text.find("rsm_percent,,60.00\n"), std::string::npos);
  EXPECT_NE(text.find("ntp,,1234\n"), std::string::npos);

  std::ostringstream traj;
  write_trajectory_csv(traj, p, b.weights);
  std::istringstream lines(traj.str());
  std::string line;
  std::getline(lines, line);
  EXPECT_EQ(line, "step,x1,x2,u1,u2,delta,d1,d2,stage_cost,inference_s");
  std::getline(lines, line);
  EXPECT_EQ(line, "0,5.2,1.8,1,0,1,0,0,1.6,0");
  int rows = 1;
  std::string last;
  while (std::getline(lines, line)) {
    ++rows;
    last = line;
  }
  EXPECT_EQ(rows, 5);
  EXPECT_EQ(last, "4,5.2,1.8,,,,,,,");
}

TEST(Report, SvgOutputsAreWellFormed) {
  const auto b = plant::make_thermal_benchmark();
  const auto p = make_policy(Strategy::SigmoidSte, 2);
  PolicyController c(p);
  const auto scenarios = make_test_scenarios(1, 2, 12, b.constraints);
  std::vector<ClosedLoopRun> runs;
  for (const auto& s : scenarios) runs.push_back(closed_loop(c, b, s, 12));
  std::ostringstream trace, phase;
  write_trace_svg(trace, runs[0], b.constraints);
  write_phase_svg(phase, runs, b.constraints);
  for (const std::string& svg : {trace.str(), phase.str()}) {
    EXPECT_EQ(svg.rfind("<svg", 0), 0u);
    EXPECT_NE(svg.find("</svg>"), std::string::npos);
    EXPECT_NE(svg.find("<polyline"), std::string::npos);
    EXPECT_EQ(svg.find("nan"), std::string::npos);
  }
}

}  // namespace
}  // namespace midpc::harness
