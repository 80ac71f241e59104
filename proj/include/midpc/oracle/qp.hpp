#pragma once

#include <Eigen/Dense>

namespace midpc::oracle {

enum class QpStatus { Optimal, Infeasible, MaxIterations };

const char* to_string(QpStatus s);

struct QpResult {
  QpStatus status = QpStatus::Infeasible;
  Eigen::VectorXd z;
  /// z^T H z - G^T z (objective constant not included).
  double cost = 0.0;
  /// One per inequality row, >= 0.
  Eigen::VectorXd multipliers;
  /// One per equality row, free sign.
  Eigen::VectorXd eq_multipliers;
  double primal_residual = 0.0;
  double stationarity_residual = 0.0;
  int iterations = 0;
};

/// Dense strictly convex QP
///
///   minimize  z^T H z - G^T z   s.t.  Omega z <= omega,  A_eq z = b_eq
///
/// by the Goldfarb-Idnani dual active-set method. H is factored once in the
/// constructor so that many problems sharing H (branch-and-bound nodes) reuse
/// the factorization.
class QpSolver {
 public:
  /// Throws ContractError unless H is symmetric positive definite.
  explicit QpSolver(const Eigen::MatrixXd& H);

  Eigen::Index dim() const { return H_.rows(); }

  QpResult solve(const Eigen::VectorXd& G, const Eigen::MatrixXd& Omega,
                 const Eigen::VectorXd& omega, const Eigen::MatrixXd& A_eq = {},
                 const Eigen::VectorXd& b_eq = {}, int max_iterations = 0) const;

 private:
  Eigen::MatrixXd H_;
  Eigen::MatrixXd J0_;           // L^{-T} with 2H = L L^T
  Eigen::LLT<Eigen::MatrixXd> llt_;
};

/// Convenience wrapper: variable bounds (+-inf allowed) become inequality rows
/// appended after Omega; the multipliers follow the same order.
QpResult solve_qp(const Eigen::MatrixXd& H, const Eigen::VectorXd& G,
                  const Eigen::MatrixXd& Omega, const Eigen::VectorXd& omega,
                  const Eigen::VectorXd& lower = {}, const Eigen::VectorXd& upper = {});

/// KKT residuals of a candidate (z, multipliers) for the problem above.
void kkt_residuals(const Eigen::MatrixXd& H, const Eigen::VectorXd& G, const Eigen::MatrixXd& Omega,
                   const Eigen::VectorXd& omega, const Eigen::MatrixXd& A_eq,
                   const Eigen::VectorXd& b_eq, QpResult& result);

}  // namespace midpc::oracle
