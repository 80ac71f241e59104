#pragma once

#include <Eigen/Dense>

#include "midpc/autodiff/tape.hpp"
#include "midpc/plant/system.hpp"

namespace midpc::trainer {

/// Batch-mean values of the individual loss terms.
struct LossTerms {
  double tracking = 0.0;
  double input_cost = 0.0;
  double integer_cost = 0.0;
  double state_penalty = 0.0;
  double input_penalty = 0.0;
  double total = 0.0;

  LossTerms& operator+=(const LossTerms& o);
  LossTerms scaled(double f) const;
};

/// ||x - r||_Q^2 + ||u||_R^2 + ||delta||_rho^2
double stage_cost(const Eigen::VectorXd& x, const Eigen::VectorXd& r, const Eigen::VectorXd& u,
                  const Eigen::VectorXd& delta, const plant::CostWeights& w);

/// Squared-hinge state bound violation summed over the rows of x_traj.
double penalty_q(const Eigen::MatrixXd& x_traj, const plant::ConstraintSpec& c);
/// Squared-hinge violation of u >= u_min and sum(u) <= u_sum_max over rows.
double penalty_p(const Eigen::MatrixXd& u_traj, const plant::ConstraintSpec& c);

// Taped, batched forms. Each returns a scalar summed over batch rows.

/// sum_b e_b^T M e_b
ad::Var quadratic_form(ad::Tape& tape, ad::Var e, const Eigen::MatrixXd& M);
ad::Var state_penalty(ad::Tape& tape, ad::Var x, const plant::ConstraintSpec& c);
ad::Var input_penalty(ad::Tape& tape, ad::Var u, const plant::ConstraintSpec& c);

}  // namespace midpc::trainer
