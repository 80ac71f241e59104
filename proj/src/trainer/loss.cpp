#include "midpc/trainer/loss.hpp"

#include <limits>

#include "midpc/autodiff/ops.hpp"

namespace midpc::trainer {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double hinge_sq(double v) { return v > 0.0 ? v * v : 0.0; }

ad::Var row_constant(ad::Tape& tape, const Eigen::VectorXd& v) {
  const auto n = static_cast<std::size_t>(v.size());
  return tape.constant(ad::Tensor({1, n}, std::vector<double>(v.data(), v.data() + n)));
}

}  // namespace

LossTerms& LossTerms::operator+=(const LossTerms& o) {
  tracking += o.tracking;
  input_cost += o.input_cost;
  integer_cost += o.integer_cost;
  state_penalty += o.state_penalty;
  input_penalty += o.input_penalty;
  total += o.total;
  return *this;
}

LossTerms LossTerms::scaled(double f) const {
  return {tracking * f, input_cost * f, integer_cost * f, state_penalty * f, input_penalty * f,
          total * f};
}

double stage_cost(const Eigen::VectorXd& x, const Eigen::VectorXd& r, const Eigen::VectorXd& u,
                  const Eigen::VectorXd& delta, const plant::CostWeights& w) {
  const Eigen::VectorXd e = x - r;
  return e.dot(w.Q * e) + u.dot(w.R * u) + delta.dot(w.rho * delta);
}

double penalty_q(const Eigen::MatrixXd& x_traj, const plant::ConstraintSpec& c) {
  double q = 0.0;
  for (Eigen::Index k = 0; k < x_traj.rows(); ++k)
    for (Eigen::Index i = 0; i < x_traj.cols(); ++i)
      q += hinge_sq(x_traj(k, i) - c.x_max(i)) + hinge_sq(c.x_min(i) - x_traj(k, i));
  return q;
}

double penalty_p(const Eigen::MatrixXd& u_traj, const plant::ConstraintSpec& c) {
  double p = 0.0;
  for (Eigen::Index k = 0; k < u_traj.rows(); ++k) {
    for (Eigen::Index i = 0; i < u_traj.cols(); ++i) p += hinge_sq(c.u_min(i) - u_traj(k, i));
    p += hinge_sq(u_traj.row(k).sum() - c.u_sum_max);
  }
  return p;
}

ad::Var quadratic_form(ad::Tape& tape, ad::Var e, const Eigen::MatrixXd& M) {
  const ad::Var Me = ad::matmul(tape, e, tape.constant(plant::to_tensor(M.transpose())));
  return ad::sum(tape, ad::mul(tape, Me, e));
}

ad::Var state_penalty(ad::Tape& tape, ad::Var x, const plant::ConstraintSpec& c) {
  const ad::Var above = ad::clip(tape, ad::sub(tape, x, row_constant(tape, c.x_max)), 0.0, kInf);
  const ad::Var below = ad::clip(tape, ad::add(tape, ad::scale(tape, x, -1.0), row_constant(tape, c.x_min)), 0.0, kInf);
  return ad::add(tape, ad::squared_norm(tape, above), ad::squared_norm(tape, below));
}

ad::Var input_penalty(ad::Tape& tape, ad::Var u, const plant::ConstraintSpec& c) {
  const ad::Var below = ad::clip(tape, ad::add(tape, ad::scale(tape, u, -1.0), row_constant(tape, c.u_min)), 0.0, kInf);
  const std::size_t n_u = tape.value(u).cols();
  const ad::Var total =
      ad::matmul(tape, u, tape.constant(ad::Tensor({n_u, 1}, 1.0)));
  const ad::Var excess = ad::clip(
      tape, ad::sub(tape, total, tape.constant(ad::Tensor({1, 1}, c.u_sum_max))), 0.0, kInf);
  return ad::add(tape, ad::squared_norm(tape, below), ad::squared_norm(tape, excess));
}

}  // namespace midpc::trainer
