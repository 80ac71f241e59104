#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "midpc/oracle/qp.hpp"
#include "midpc/plant/system.hpp"

namespace midpc::oracle {

/// Condensed mixed-integer QP
///
///   minimize  z^T H z - G^T z + constant   s.t.  Omega z <= omega,
///             z_i integer in [lo_i, hi_i] for i in integer_indices.
///
/// z stacks [u_0, delta_0, u_1, delta_1, ...], optionally followed by one
/// state-bound slack per (step, state) in soft-state form.
struct MiqpProblem {
  Eigen::MatrixXd H;
  Eigen::VectorXd G;
  double constant = 0.0;
  Eigen::MatrixXd Omega;
  Eigen::VectorXd omega;
  std::vector<Eigen::Index> integer_indices;
  std::vector<std::pair<int, int>> integer_bounds;

  std::size_t horizon = 0;
  Eigen::Index n_u = 0;
  Eigen::Index n_delta = 0;
  /// Number of state slacks (0 for the hard-constrained form).
  Eigen::Index n_slack = 0;
  double slack_weight = 0.0;
  /// Prediction data: the state trajectory x_1..x_N (stacked) equals
  /// free_response + Gamma * z.head(n_controls()).
  Eigen::MatrixXd Gamma;
  Eigen::VectorXd free_response;
  Eigen::VectorXd x_min;
  Eigen::VectorXd x_max;

  Eigen::Index dim() const { return H.rows(); }
  Eigen::Index n_controls() const {
    return static_cast<Eigen::Index>(horizon) * (n_u + n_delta);
  }

  /// Full objective including the constant.
  double objective(const Eigen::VectorXd& z) const;
  /// Objective of a control plan with the cheapest admissible slacks.
  double plan_objective(const Eigen::VectorXd& controls) const;
  /// Max violation of Omega z <= omega (0 when feasible).
  double violation(const Eigen::VectorXd& z) const;

  void validate() const;
};

/// Substitutes the dynamics into the horizon-N cost. `d_window` is N x n_d.
/// With `soft_state`, state bounds become slack rows penalized by c_x * s^2.
MiqpProblem condense(const plant::Benchmark& bench, const Eigen::VectorXd& x0,
                     const Eigen::MatrixXd& d_window, std::size_t horizon, bool soft_state = false);

/// Cost of a control plan by direct simulation (stage costs for k < N,
/// terminal cost at N, and c_x-weighted squared state excess for k >= 1 when
/// soft_state is set).
double simulate_plan_cost(const plant::Benchmark& bench, const Eigen::VectorXd& x0,
                          const Eigen::MatrixXd& d_window, const Eigen::VectorXd& controls,
                          bool soft_state = false);

enum class SolveStatus { Optimal, Infeasible, NodeLimit };

const char* to_string(SolveStatus s);

struct OracleSolution {
  SolveStatus status = SolveStatus::Infeasible;
  Eigen::VectorXd z;
  double cost = 0.0;
  std::size_t nodes_explored = 0;
  double wall_time = 0.0;
  /// Nodes whose relaxation fell below their parent's by more than the
  /// tolerance; nonzero would indicate a QP accuracy problem.
  std::size_t bound_violations = 0;
  double max_primal_residual = 0.0;
  double max_stationarity_residual = 0.0;
};

struct BnbOptions {
  std::size_t node_limit = 1000000;
  double prune_tolerance = 1e-9;
  double integrality_tolerance = 1e-6;
};

/// Best-first branch and bound over QP relaxations; branches on the most
/// fractional integer variable.
OracleSolution branch_and_bound(const MiqpProblem& problem, const BnbOptions& options = {});

/// Enumerates every integer assignment (refuses more than `limit`).
OracleSolution brute_force(const MiqpProblem& problem, std::uint64_t limit = 1000000);

struct MpcStep {
  Eigen::VectorXd u;
  Eigen::VectorXd delta;
  OracleSolution solution;
};

/// One receding-horizon step: condense, solve, return the first move. Throws
/// nothing on infeasibility; check solution.status.
MpcStep oracle_mpc_step(const plant::Benchmark& bench, const Eigen::VectorXd& x,
                        const Eigen::MatrixXd& d_window, std::size_t horizon, bool soft_state,
                        const BnbOptions& options = {});

/// step, cost, nodes_explored, wall_time, status
void write_diagnostics_header(std::ostream& out);
void write_diagnostics_row(std::ostream& out, std::size_t step, const OracleSolution& s);

}  // namespace midpc::oracle
