#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "midpc/oracle/miqp.hpp"
#include "midpc/plant/scenario.hpp"
#include "midpc/plant/system.hpp"
#include "midpc/policy/policy.hpp"

namespace midpc::harness {

struct ControlMove {
  Eigen::VectorXd u;
  Eigen::VectorXd delta;
};

/// Receding-horizon controller: sees the state and the next N disturbances.
class Controller {
 public:
  virtual ~Controller() = default;
  virtual std::string id() const = 0;
  virtual std::size_t horizon() const = 0;
  /// d_window is N x n_d. Throwing marks the closed-loop run as failed.
  virtual ControlMove act(const Eigen::VectorXd& x, const Eigen::MatrixXd& d_window) = 0;
};

class PolicyController final : public Controller {
 public:
  explicit PolicyController(const policy::Policy& policy, std::string id = {});
  std::string id() const override { return id_; }
  std::size_t horizon() const override { return policy_.config().horizon; }
  ControlMove act(const Eigen::VectorXd& x, const Eigen::MatrixXd& d_window) override;

 private:
  const policy::Policy& policy_;
  std::string id_;
  std::vector<double> xi_;
};

/// MI-MPC solved by branch and bound at every step. Infeasible subproblems
/// (possible only with hard state constraints) throw NumericalError; a node
/// limit with an incumbent applies the incumbent.
class OracleController final : public Controller {
 public:
  OracleController(plant::Benchmark bench, std::size_t horizon, bool soft_state,
                   oracle::BnbOptions options = {});
  std::string id() const override;
  std::size_t horizon() const override { return horizon_; }
  ControlMove act(const Eigen::VectorXd& x, const Eigen::MatrixXd& d_window) override;

  /// Per-step solver diagnostics since construction (or the last clear()).
  const std::vector<oracle::OracleSolution>& diagnostics() const { return diagnostics_; }
  void clear() { diagnostics_.clear(); }

 private:
  plant::Benchmark bench_;
  std::size_t horizon_;
  bool soft_state_;
  oracle::BnbOptions options_;
  std::vector<oracle::OracleSolution> diagnostics_;
};

class ZeroController final : public Controller {
 public:
  ZeroController(Eigen::Index n_u, Eigen::Index n_delta, std::size_t horizon)
      : n_u_(n_u), n_delta_(n_delta), horizon_(horizon) {}
  std::string id() const override { return "zero"; }
  std::size_t horizon() const override { return horizon_; }
  ControlMove act(const Eigen::VectorXd&, const Eigen::MatrixXd&) override {
    return {Eigen::VectorXd::Zero(n_u_), Eigen::VectorXd::Zero(n_delta_)};
  }

 private:
  Eigen::Index n_u_, n_delta_;
  std::size_t horizon_;
};

struct Scenario {
  Eigen::VectorXd x0;
  /// At least n_sim rows; closed_loop pads with zeros to n_sim + N.
  Eigen::MatrixXd d;
};

struct ClosedLoopRun {
  std::string controller;
  std::uint64_t seed = 0;
  std::size_t horizon = 0;
  Eigen::MatrixXd x;       // (steps + 1) x n_x
  Eigen::MatrixXd u;       // steps x n_u
  Eigen::MatrixXd delta;   // steps x n_delta
  Eigen::MatrixXd d;       // (n_sim + N) x n_d, zero padded
  std::vector<double> inference_s;
  bool failed = false;
  std::size_t failed_at = 0;
  std::string failure;

  std::size_t steps() const { return static_cast<std::size_t>(u.rows()); }
};

ClosedLoopRun closed_loop(Controller& controller, const plant::Benchmark& bench,
                          const Scenario& scenario, std::size_t n_sim, std::uint64_t seed = 0);

/// One run per scenario, spread over `workers` threads. Each thread gets its
/// own controller from `factory`; run i uses seed derive_seed(seed, i).
std::vector<ClosedLoopRun> closed_loop_batch(
    const std::function<std::unique_ptr<Controller>()>& factory, const plant::Benchmark& bench,
    const std::vector<Scenario>& scenarios, std::size_t n_sim, std::size_t workers = 1,
    std::uint64_t seed = 0);

/// n_ic initial conditions; with `shared_disturbance` all share one trace.
/// Disturbances are sampled for n_sim steps (the closed loop zero-pads the
/// lookahead beyond).
std::vector<Scenario> make_test_scenarios(std::uint64_t seed, std::size_t n_ic, std::size_t n_sim,
                                          const plant::ConstraintSpec& constraints,
                                          bool shared_disturbance = true,
                                          const plant::DisturbanceConfig& cfg = {});

/// Mean stage cost over every step of every run (terminal cost and penalties
/// excluded).
double mean_stepwise_loss(const std::vector<ClosedLoopRun>& runs, const plant::CostWeights& w);

/// (l_policy - l_oracle) / l_oracle; ContractError unless both sets of runs
/// use identical scenarios and lengths.
double relative_suboptimality(const std::vector<ClosedLoopRun>& policy_runs,
                              const std::vector<ClosedLoopRun>& oracle_runs,
                              const plant::CostWeights& w);

/// x_oracle - x_policy per run.
std::vector<Eigen::MatrixXd> error_traces(const std::vector<ClosedLoopRun>& policy_runs,
                                          const std::vector<ClosedLoopRun>& oracle_runs);

double mean_inference_time(const std::vector<ClosedLoopRun>& runs);

struct ConstraintViolation {
  std::string name;
  double max_excess = 0.0;
  double mean_excess = 0.0;
  double violating_fraction = 0.0;
};

struct ViolationStats {
  std::vector<ConstraintViolation> constraints;
  std::size_t steps = 0;
  double state_max_excess = 0.0;
  double state_violating_fraction = 0.0;
  double input_max_excess = 0.0;
  double input_violating_fraction = 0.0;
};

/// States are checked at x_1..x_n (the ones the controller influences),
/// inputs at every applied move. A step violates when an excess is > 1e-6.
ViolationStats violation_stats(const std::vector<ClosedLoopRun>& runs,
                               const plant::ConstraintSpec& constraints);

struct MetricsReport {
  std::string controller;
  std::size_t horizon = 0;
  double l_mean = 0.0;
  std::optional<double> rsm;
  double mit = 0.0;
  std::optional<std::size_t> ntp;
  ViolationStats violations;
  std::size_t failed_runs = 0;
};

MetricsReport summarize(const std::string& controller, const std::vector<ClosedLoopRun>& runs,
                        const plant::Benchmark& bench,
                        const std::vector<ClosedLoopRun>* oracle_runs = nullptr,
                        std::optional<std::size_t> ntp = std::nullopt);

/// step, x1.., u1.., delta.., d1.., stage_cost, inference_s. The last row holds
/// only the final state.
void write_trajectory_csv(std::ostream& out, const ClosedLoopRun& run, const plant::CostWeights& w);

/// One column per report, one row per metric. inference-time rows are not
/// reproducible across machines.
void write_metrics_csv(std::ostream& out, const std::vector<MetricsReport>& reports);

/// State, input and disturbance traces with constraint bounds.
void write_trace_svg(std::ostream& out, const ClosedLoopRun& run, const plant::ConstraintSpec& c);
/// x1 versus x2 for several runs, with the state box.
void write_phase_svg(std::ostream& out, const std::vector<ClosedLoopRun>& runs,
                     const plant::ConstraintSpec& c);

}  // namespace midpc::harness
