#include "midpc/plant/system.hpp"

#include <string>

#include "midpc/autodiff/ops.hpp"
#include "midpc/util/errors.hpp"

namespace midpc::plant {
namespace {

void require_shape(const Eigen::MatrixXd& m, Eigen::Index rows, Eigen::Index cols,
                   const char* what) {
  if (m.rows() != rows || m.cols() != cols)
    throw ShapeError(std::string(what) + ": expected " + std::to_string(rows) + "x" +
                     std::to_string(cols) + ", got " + std::to_string(m.rows()) + "x" +
                     std::to_string(m.cols()));
}

void require_finite(const Eigen::MatrixXd& m, const char* what) {
  if (!m.allFinite()) throw ConfigError(std::string(what) + ": non-finite entries");
}

void require_symmetric_psd(const Eigen::MatrixXd& m, const char* what, bool strict) {
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12)
    throw ConfigError(std::string(what) + ": not symmetric");
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
  const double lo = eig.eigenvalues().minCoeff();
  if (strict ? lo <= 0.0 : lo < -1e-12)
    throw ConfigError(std::string(what) + (strict ? ": not positive definite"
                                                  : ": not positive semidefinite"));
}

}  // namespace

void SystemModel::validate() const {
  const auto nx = A.rows();
  require_shape(A, nx, nx, "A");
  require_shape(B_u, nx, B_u.cols(), "B_u");
  require_shape(B_delta, nx, B_delta.cols(), "B_delta");
  require_shape(E, nx, E.cols(), "E");
  require_finite(A, "A");
  require_finite(B_u, "B_u");
  require_finite(B_delta, "B_delta");
  require_finite(E, "E");
  if (!(sampling_period > 0.0)) throw ConfigError("sampling period must be positive");
}

void ConstraintSpec::validate(const SystemModel& model) const {
  require_shape(x_min, model.n_x(), 1, "x_min");
  require_shape(x_max, model.n_x(), 1, "x_max");
  require_shape(u_min, model.n_u(), 1, "u_min");
  if (!(x_min.array() < x_max.array()).all()) throw ConfigError("x_min must be below x_max");
  if (static_cast<Eigen::Index>(feasible_integers.size()) != model.n_delta())
    throw ShapeError("one feasible integer set per integer input required");
  for (const auto& set : feasible_integers) {
    if (set.size() < 2) throw ConfigError("feasible integer sets need at least two values");
    for (std::size_t i = 1; i < set.size(); ++i)
      if (set[i] <= set[i - 1]) throw ConfigError("feasible integer sets must be strictly increasing");
  }
}

bool ConstraintSpec::consecutive(std::size_t j) const {
  const auto& set = feasible_integers.at(j);
  for (std::size_t i = 1; i < set.size(); ++i)
    if (set[i] != set[i - 1] + 1) return false;
  return true;
}

void CostWeights::validate(const SystemModel& model) const {
  require_shape(Q, model.n_x(), model.n_x(), "Q");
  require_shape(P, model.n_x(), model.n_x(), "P");
  require_shape(R, model.n_u(), model.n_u(), "R");
  require_shape(rho, model.n_delta(), model.n_delta(), "rho");
  require_shape(r, model.n_x(), 1, "r");
  require_symmetric_psd(Q, "Q", false);
  require_symmetric_psd(P, "P", false);
  require_symmetric_psd(R, "R", false);
  require_symmetric_psd(rho, "rho", false);
  if (c_x < 0.0 || c_u < 0.0) throw ConfigError("penalty weights must be non-negative");
}

Benchmark make_thermal_benchmark() {
  const double alpha1 = 0.9983;
  const double alpha2 = 0.9966;
  const double nu = 0.001;
  const double b1 = 0.075, b2 = 0.075, b3 = 0.0825, b4 = 0.0833, b5 = 0.0833;

  Benchmark b;
  b.model.A.resize(2, 2);
  b.model.A << alpha1, nu, 0.0, alpha2 - nu;
  b.model.B_u.resize(2, 2);
  b.model.B_u << b1, 0.0, 0.0, b2;
  b.model.B_delta.resize(2, 1);
  b.model.B_delta << 0.0, b3;
  b.model.E.resize(2, 2);
  b.model.E << -b4, 0.0, 0.0, -b5;
  b.model.sampling_period = 300.0;

  b.constraints.x_min = Eigen::Vector2d(0.0, 0.0);
  b.constraints.x_max = Eigen::Vector2d(8.4, 3.6);
  b.constraints.u_min = Eigen::Vector2d(0.0, 0.0);
  b.constraints.u_sum_max = 8.0;
  b.constraints.feasible_integers = {{0, 1, 2, 3}};

  b.weights.Q = Eigen::Matrix2d::Identity();
  b.weights.P = Eigen::Matrix2d::Identity();
  b.weights.R = 0.5 * Eigen::Matrix2d::Identity();
  b.weights.rho = Eigen::MatrixXd::Constant(1, 1, 0.1);
  b.weights.c_x = 25.0;
  b.weights.c_u = 25.0;
  b.weights.r = Eigen::Vector2d(4.2, 1.8);
  return b;
}

Eigen::VectorXd step(const SystemModel& model, const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                     const Eigen::VectorXd& delta, const Eigen::VectorXd& d) {
  require_shape(x, model.n_x(), 1, "step: x");
  require_shape(u, model.n_u(), 1, "step: u");
  require_shape(delta, model.n_delta(), 1, "step: delta");
  require_shape(d, model.n_d(), 1, "step: d");
  return model.A * x + model.B_u * u + model.B_delta * delta + model.E * d;
}

ad::Tensor to_tensor(const Eigen::MatrixXd& m) {
  ad::Tensor t = ad::Tensor::matrix(static_cast<std::size_t>(m.rows()),
                                    static_cast<std::size_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      t(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = m(i, j);
  return t;
}

Eigen::MatrixXd to_matrix(const ad::Tensor& t) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = t(i, j);
  return m;
}

ad::Var step(ad::Tape& tape, const SystemModel& model, ad::Var x, ad::Var u, ad::Var delta,
             ad::Var d) {
  auto term = [&](ad::Var v, const Eigen::MatrixXd& m, const char* what) {
    if (tape.value(v).cols() != static_cast<std::size_t>(m.cols()))
      throw ShapeError(std::string("step: ") + what + " has width " +
                       std::to_string(tape.value(v).cols()) + ", expected " +
                       std::to_string(m.cols()));
    return ad::matmul(tape, v, tape.constant(to_tensor(m.transpose())));
  };
  ad::Var next = term(x, model.A, "x");
  next = ad::add(tape, next, term(u, model.B_u, "u"));
  next = ad::add(tape, next, term(delta, model.B_delta, "delta"));
  return ad::add(tape, next, term(d, model.E, "d"));
}

}  // namespace midpc::plant
