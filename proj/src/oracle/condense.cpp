#include <cmath>

#include "midpc/oracle/miqp.hpp"
#include "midpc/util/errors.hpp"

namespace midpc::oracle {

double MiqpProblem::objective(const Eigen::VectorXd& z) const {
  if (z.size() != dim()) throw ShapeError("objective: z has wrong length");
  return z.dot(H * z) - G.dot(z) + constant;
}

double MiqpProblem::plan_objective(const Eigen::VectorXd& controls) const {
  if (controls.size() != n_controls()) throw ShapeError("plan_objective: wrong plan length");
  Eigen::VectorXd z(dim());
  z.head(n_controls()) = controls;
  if (n_slack > 0) {
    const Eigen::VectorXd x = free_response + Gamma * controls;
    const Eigen::Index nx = x_min.size();
    for (Eigen::Index i = 0; i < n_slack; ++i) {
      const Eigen::Index s = i % nx;
      z(n_controls() + i) = std::max({0.0, x(i) - x_max(s), x_min(s) - x(i)});
    }
  }
  return objective(z);
}

double MiqpProblem::violation(const Eigen::VectorXd& z) const {
  if (Omega.rows() == 0) return 0.0;
  return std::max(0.0, (Omega * z - omega).maxCoeff());
}

void MiqpProblem::validate() const {
  const Eigen::Index n = dim();
  if (H.cols() != n || G.size() != n) throw ShapeError("miqp: H and G sizes disagree");
  if ((H - H.transpose()).cwiseAbs().maxCoeff() > 1e-12) throw ContractError("miqp: H not symmetric");
  if (Omega.rows() != omega.size() || (Omega.rows() > 0 && Omega.cols() != n))
    throw ShapeError("miqp: Omega and omega disagree");
  if (integer_indices.size() != integer_bounds.size())
    throw ShapeError("miqp: one bound pair per integer variable required");
  for (std::size_t i = 0; i < integer_indices.size(); ++i) {
    if (integer_indices[i] < 0 || integer_indices[i] >= n)
      throw ShapeError("miqp: integer index out of range");
    if (integer_bounds[i].first > integer_bounds[i].second)
      throw ConfigError("miqp: empty integer range");
  }
}

MiqpProblem condense(const plant::Benchmark& bench, const Eigen::VectorXd& x0,
                     const Eigen::MatrixXd& d_window, std::size_t horizon, bool soft_state) {
  const auto& m = bench.model;
  const auto& c = bench.constraints;
  const auto& w = bench.weights;
  if (horizon < 1) throw ConfigError("condense: horizon must be at least 1");
  const Eigen::Index N = static_cast<Eigen::Index>(horizon);
  const Eigen::Index nx = m.n_x(), nu = m.n_u(), nd = m.n_delta(), nw = m.n_d();
  const Eigen::Index nv = nu + nd;
  if (x0.size() != nx) throw ShapeError("condense: x0 has wrong length");
  if (d_window.rows() != N || d_window.cols() != nw)
    throw ShapeError("condense: disturbance window must be N x n_d");
  for (std::size_t j = 0; j < c.feasible_integers.size(); ++j)
    if (!c.consecutive(j))
      throw ConfigError("condense: integer sets must be consecutive for box relaxation");
  if (soft_state && !(w.c_x > 0.0)) throw ConfigError("condense: soft state needs c_x > 0");

  Eigen::MatrixXd B(nx, nv);
  B << m.B_u, m.B_delta;

  MiqpProblem p;
  p.horizon = horizon;
  p.n_u = nu;
  p.n_delta = nd;
  p.x_min = c.x_min;
  p.x_max = c.x_max;

  // Prediction: x_{k+1} = A^{k+1} x0 + sum_{j<=k} A^{k-j} (B v_j + E d_j).
  p.Gamma = Eigen::MatrixXd::Zero(N * nx, N * nv);
  p.free_response.resize(N * nx);
  std::vector<Eigen::MatrixXd> Apow(static_cast<std::size_t>(N));
  Apow[0] = Eigen::MatrixXd::Identity(nx, nx);
  for (Eigen::Index k = 1; k < N; ++k) Apow[static_cast<std::size_t>(k)] = m.A * Apow[static_cast<std::size_t>(k - 1)];
  Eigen::VectorXd free = x0;
  for (Eigen::Index k = 0; k < N; ++k) {
    free = m.A * free + m.E * d_window.row(k).transpose();
    p.free_response.segment(k * nx, nx) = free;
    for (Eigen::Index j = 0; j <= k; ++j)
      p.Gamma.block(k * nx, j * nv, nx, nv) = Apow[static_cast<std::size_t>(k - j)] * B;
  }

  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(N * nx, N * nx);
  for (Eigen::Index k = 0; k < N; ++k) W.block(k * nx, k * nx, nx, nx) = k + 1 < N ? w.Q : w.P;
  Eigen::MatrixXd Rbar = Eigen::MatrixXd::Zero(N * nv, N * nv);
  for (Eigen::Index k = 0; k < N; ++k) {
    Rbar.block(k * nv, k * nv, nu, nu) = w.R;
    Rbar.block(k * nv + nu, k * nv + nu, nd, nd) = w.rho;
  }
  const Eigen::VectorXd rbar = w.r.replicate(N, 1);
  const Eigen::VectorXd e = p.free_response - rbar;
  const Eigen::MatrixXd WG = W * p.Gamma;

  p.n_slack = soft_state ? N * nx : 0;
  p.slack_weight = soft_state ? w.c_x : 0.0;
  const Eigen::Index n = N * nv + p.n_slack;
  p.H = Eigen::MatrixXd::Zero(n, n);
  p.H.topLeftCorner(N * nv, N * nv) = p.Gamma.transpose() * WG + Rbar;
  p.H = 0.5 * (p.H + p.H.transpose()).eval();
  if (soft_state) p.H.bottomRightCorner(p.n_slack, p.n_slack).diagonal().setConstant(w.c_x);
  p.G = Eigen::VectorXd::Zero(n);
  p.G.head(N * nv) = -2.0 * WG.transpose() * e;
  const Eigen::VectorXd dx0 = x0 - w.r;
  p.constant = e.dot(W * e) + dx0.dot(w.Q * dx0);

  // Rows: state upper/lower per step, (soft) slack >= 0, u >= u_min,
  // sum(u) <= u_sum_max, integer box.
  const Eigen::Index rows = 2 * N * nx + p.n_slack + N * nu + N + 2 * N * nd;
  p.Omega = Eigen::MatrixXd::Zero(rows, n);
  p.omega = Eigen::VectorXd::Zero(rows);
  Eigen::Index row = 0;
  for (Eigen::Index k = 0; k < N; ++k)
    for (Eigen::Index i = 0; i < nx; ++i) {
      const Eigen::Index xi = k * nx + i;
      p.Omega.row(row).head(N * nv) = p.Gamma.row(xi);
      p.omega(row) = c.x_max(i) - p.free_response(xi);
      if (soft_state) p.Omega(row, N * nv + xi) = -1.0;
      ++row;
      p.Omega.row(row).head(N * nv) = -p.Gamma.row(xi);
      p.omega(row) = p.free_response(xi) - c.x_min(i);
      if (soft_state) p.Omega(row, N * nv + xi) = -1.0;
      ++row;
    }
  for (Eigen::Index s = 0; s < p.n_slack; ++s) p.Omega(row++, N * nv + s) = -1.0;
  for (Eigen::Index k = 0; k < N; ++k) {
    for (Eigen::Index j = 0; j < nu; ++j) {
      p.Omega(row, k * nv + j) = -1.0;
      p.omega(row) = -c.u_min(j);
      ++row;
    }
    p.Omega.row(row).segment(k * nv, nu).setOnes();
    p.omega(row) = c.u_sum_max;
    ++row;
  }
  for (Eigen::Index k = 0; k < N; ++k)
    for (Eigen::Index j = 0; j < nd; ++j) {
      const Eigen::Index idx = k * nv + nu + j;
      const int lo = c.integer_min(static_cast<std::size_t>(j));
      const int hi = c.integer_max(static_cast<std::size_t>(j));
      p.Omega(row, idx) = 1.0;
      p.omega(row++) = hi;
      p.Omega(row, idx) = -1.0;
      p.omega(row++) = -lo;
      p.integer_indices.push_back(idx);
      p.integer_bounds.emplace_back(lo, hi);
    }
  return p;
}

double simulate_plan_cost(const plant::Benchmark& bench, const Eigen::VectorXd& x0,
                          const Eigen::MatrixXd& d_window, const Eigen::VectorXd& controls,
                          bool soft_state) {
  const auto& m = bench.model;
  const auto& w = bench.weights;
  const auto& c = bench.constraints;
  const Eigen::Index N = d_window.rows();
  const Eigen::Index nu = m.n_u(), nd = m.n_delta(), nv = nu + nd;
  if (controls.size() != N * nv) throw ShapeError("simulate_plan_cost: wrong plan length");
  Eigen::VectorXd x = x0;
  double cost = 0.0;
  for (Eigen::Index k = 0; k < N; ++k) {
    const Eigen::VectorXd u = controls.segment(k * nv, nu);
    const Eigen::VectorXd delta = controls.segment(k * nv + nu, nd);
    const Eigen::VectorXd e = x - w.r;
    cost += e.dot(w.Q * e) + u.dot(w.R * u) + delta.dot(w.rho * delta);
    x = plant::step(m, x, u, delta, d_window.row(k).transpose());
    if (soft_state)
      for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double excess = std::max({0.0, x(i) - c.x_max(i), c.x_min(i) - x(i)});
        cost += w.c_x * excess * excess;
      }
  }
  const Eigen::VectorXd e = x - w.r;
  return cost + e.dot(w.P * e);
}

}  // namespace midpc::oracle
