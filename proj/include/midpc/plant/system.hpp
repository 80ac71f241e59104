#pragma once

#include <Eigen/Dense>
#include <vector>

#include "midpc/autodiff/tape.hpp"

namespace midpc::plant {

/// x_{k+1} = A x_k + B_u u_k + B_delta delta_k + E d_k
struct SystemModel {
  Eigen::MatrixXd A;
  Eigen::MatrixXd B_u;
  Eigen::MatrixXd B_delta;
  Eigen::MatrixXd E;
  double sampling_period = 0.0;

  Eigen::Index n_x() const { return A.rows(); }
  Eigen::Index n_u() const { return B_u.cols(); }
  Eigen::Index n_delta() const { return B_delta.cols(); }
  Eigen::Index n_d() const { return E.cols(); }

  /// Throws ShapeError / ConfigError when dimensions or values are inconsistent.
  void validate() const;
};

struct ConstraintSpec {
  Eigen::VectorXd x_min;
  Eigen::VectorXd x_max;
  Eigen::VectorXd u_min;
  double u_sum_max = 0.0;
  /// Per integer input, the sorted feasible values.
  std::vector<std::vector<int>> feasible_integers;

  void validate(const SystemModel& model) const;
  /// True when feasible_integers[j] is a run of consecutive integers.
  bool consecutive(std::size_t j) const;
  int integer_min(std::size_t j) const { return feasible_integers.at(j).front(); }
  int integer_max(std::size_t j) const { return feasible_integers.at(j).back(); }
};

struct CostWeights {
  Eigen::MatrixXd Q;
  Eigen::MatrixXd P;
  Eigen::MatrixXd R;
  Eigen::MatrixXd rho;
  double c_x = 0.0;
  double c_u = 0.0;
  Eigen::VectorXd r;

  void validate(const SystemModel& model) const;
};

struct Benchmark {
  SystemModel model;
  ConstraintSpec constraints;
  CostWeights weights;
};

/// Two-zone thermal storage benchmark: two continuous heat inputs, one
/// integer-valued input taking values in {0, 1, 2, 3}, two disturbances.
Benchmark make_thermal_benchmark();

Eigen::VectorXd step(const SystemModel& model, const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                     const Eigen::VectorXd& delta, const Eigen::VectorXd& d);

/// Batched step on the tape. Each argument holds one sample per row.
ad::Var step(ad::Tape& tape, const SystemModel& model, ad::Var x, ad::Var u, ad::Var delta,
             ad::Var d);

ad::Tensor to_tensor(const Eigen::MatrixXd& m);
Eigen::MatrixXd to_matrix(const ad::Tensor& t);

}  // namespace midpc::plant
