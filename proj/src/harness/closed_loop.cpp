#include <algorithm>
#include <chrono>
#include <cmath>

#include "midpc/harness/harness.hpp"
#include "midpc/util/errors.hpp"
#include "midpc/util/parallel.hpp"
#include "midpc/util/rng.hpp"

namespace midpc::harness {

PolicyController::PolicyController(const policy::Policy& policy, std::string id)
    : policy_(policy), id_(std::move(id)) {
  if (id_.empty())
    id_ = rounding::to_string(policy.config().strategy) + "_N" +
          std::to_string(policy.config().horizon);
}

ControlMove PolicyController::act(const Eigen::VectorXd& x, const Eigen::MatrixXd& d_window) {
  xi_.assign(x.data(), x.data() + x.size());
  for (Eigen::Index k = 0; k < d_window.rows(); ++k)
    for (Eigen::Index j = 0; j < d_window.cols(); ++j) xi_.push_back(d_window(k, j));
  const auto a = policy_.act(xi_);
  return {Eigen::Map<const Eigen::VectorXd>(a.u.data(), static_cast<Eigen::Index>(a.u.size())),
          Eigen::Map<const Eigen::VectorXd>(a.delta.data(),
                                            static_cast<Eigen::Index>(a.delta.size()))};
}

OracleController::OracleController(plant::Benchmark bench, std::size_t horizon, bool soft_state,
                                   oracle::BnbOptions options)
    : bench_(std::move(bench)), horizon_(horizon), soft_state_(soft_state), options_(options) {
  if (horizon_ < 1) throw ConfigError("oracle controller: horizon must be at least 1");
}

std::string OracleController::id() const {
  return std::string(soft_state_ ? "oracle_soft" : "oracle_hard") + "_N" + std::to_string(horizon_);
}

ControlMove OracleController::act(const Eigen::VectorXd& x, const Eigen::MatrixXd& d_window) {
  auto step = oracle::oracle_mpc_step(bench_, x, d_window, horizon_, soft_state_, options_);
  diagnostics_.push_back(step.solution);
  if (step.solution.z.size() == 0)
    throw NumericalError(std::string("oracle: no solution (") + oracle::to_string(step.solution.status) + ")");
  return {std::move(step.u), std::move(step.delta)};
}

namespace {

void check_move(const ControlMove& m, const plant::Benchmark& bench) {
  if (m.u.size() != bench.model.n_u() || m.delta.size() != bench.model.n_delta())
    throw ShapeError("controller returned a move of the wrong size");
  if (!m.u.allFinite() || !m.delta.allFinite())
    throw NumericalError("controller returned non-finite inputs");
  for (Eigen::Index j = 0; j < m.delta.size(); ++j) {
    const auto& set = bench.constraints.feasible_integers[static_cast<std::size_t>(j)];
    if (std::find(set.begin(), set.end(), m.delta(j)) == set.end())
      throw ContractError("controller returned an infeasible integer input " +
                          std::to_string(m.delta(j)));
  }
}

}  // namespace

ClosedLoopRun closed_loop(Controller& controller, const plant::Benchmark& bench,
                          const Scenario& scenario, std::size_t n_sim, std::uint64_t seed) {
  const std::size_t N = controller.horizon();
  const Eigen::Index nx = bench.model.n_x(), nu = bench.model.n_u(),
                     nd = bench.model.n_delta(), nw = bench.model.n_d();
  if (scenario.x0.size() != nx) throw ShapeError("closed_loop: x0 has wrong length");
  if (scenario.d.cols() != nw) throw ShapeError("closed_loop: disturbance has wrong width");
  if (static_cast<std::size_t>(scenario.d.rows()) < n_sim)
    throw ContractError("closed_loop: disturbance trace shorter than the simulation");

  ClosedLoopRun run;
  run.controller = controller.id();
  run.seed = seed;
  run.horizon = N;
  const Eigen::Index total = static_cast<Eigen::Index>(n_sim + N);
  run.d = Eigen::MatrixXd::Zero(total, nw);
  const Eigen::Index have = std::min(total, scenario.d.rows());
  run.d.topRows(have) = scenario.d.topRows(have);

  run.x.resize(static_cast<Eigen::Index>(n_sim) + 1, nx);
  run.u.resize(static_cast<Eigen::Index>(n_sim), nu);
  run.delta.resize(static_cast<Eigen::Index>(n_sim), nd);
  run.inference_s.reserve(n_sim);
  Eigen::VectorXd x = scenario.x0;
  run.x.row(0) = x.transpose();

  using Clock = std::chrono::steady_clock;
  std::size_t k = 0;
  for (; k < n_sim; ++k) {
    const Eigen::Index row = static_cast<Eigen::Index>(k);
    const Eigen::MatrixXd window = run.d.middleRows(row, static_cast<Eigen::Index>(N));
    ControlMove move;
    try {
      const auto t0 = Clock::now();
      move = controller.act(x, window);
      run.inference_s.push_back(std::chrono::duration<double>(Clock::now() - t0).count());
      check_move(move, bench);
    } catch (const std::exception& e) {
      run.failed = true;
      run.failed_at = k;
      run.failure = e.what();
      break;
    }
    run.u.row(row) = move.u.transpose();
    run.delta.row(row) = move.delta.transpose();
    x = plant::step(bench.model, x, move.u, move.delta, run.d.row(row).transpose());
    run.x.row(row + 1) = x.transpose();
  }
  if (run.failed) {
    const Eigen::Index done = static_cast<Eigen::Index>(k);
    run.x.conservativeResize(done + 1, nx);
    run.u.conservativeResize(done, nu);
    run.delta.conservativeResize(done, nd);
    run.inference_s.resize(k);
  }
  return run;
}

std::vector<ClosedLoopRun> closed_loop_batch(
    const std::function<std::unique_ptr<Controller>()>& factory, const plant::Benchmark& bench,
    const std::vector<Scenario>& scenarios, std::size_t n_sim, std::size_t workers,
    std::uint64_t seed) {
  if (workers == 0) throw ConfigError("closed_loop_batch: workers must be positive");
  workers = std::max<std::size_t>(1, std::min(workers, scenarios.size()));
  std::vector<std::unique_ptr<Controller>> controllers;
  for (std::size_t t = 0; t < workers; ++t) controllers.push_back(factory());
  std::vector<ClosedLoopRun> runs(scenarios.size());
  parallel_for(scenarios.size(), workers, [&](std::size_t i) {
    runs[i] = closed_loop(*controllers[i % workers], bench, scenarios[i], n_sim, derive_seed(seed, i));
  });
  return runs;
}

std::vector<Scenario> make_test_scenarios(std::uint64_t seed, std::size_t n_ic, std::size_t n_sim,
                                          const plant::ConstraintSpec& constraints,
                                          bool shared_disturbance,
                                          const plant::DisturbanceConfig& cfg) {
  if (n_ic == 0 || n_sim == 0) throw ConfigError("test scenarios: n_ic and n_sim must be positive");
  cfg.validate();
  const auto test = static_cast<std::uint64_t>(plant::Split::Test);
  Rng shared_rng(derive_seed(seed, test, 0x64697374));
  const Eigen::MatrixXd shared = plant::sample_disturbances(shared_rng, n_sim, cfg);
  std::vector<Scenario> out;
  for (std::size_t i = 0; i < n_ic; ++i) {
    Rng rng(derive_seed(seed, test, i));
    Scenario s;
    s.x0 = plant::sample_initial_state(rng, constraints);
    s.d = shared_disturbance ? shared : plant::sample_disturbances(rng, n_sim, cfg);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace midpc::harness
