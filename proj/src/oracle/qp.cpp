#include "midpc/oracle/qp.hpp"

#include <Eigen/Jacobi>
#include <cmath>
#include <limits>
#include <vector>

#include "midpc/util/errors.hpp"

namespace midpc::oracle {

const char* to_string(QpStatus s) {
  switch (s) {
    case QpStatus::Optimal: return "optimal";
    case QpStatus::Infeasible: return "infeasible";
    case QpStatus::MaxIterations: return "max_iterations";
  }
  return "?";
}

QpSolver::QpSolver(const Eigen::MatrixXd& H) : H_(H) {
  if (H.rows() != H.cols()) throw ShapeError("qp: H must be square");
  if (H.rows() == 0) throw ShapeError("qp: empty problem");
  const double asym = (H - H.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-12 * std::max(1.0, H.cwiseAbs().maxCoeff()))
    throw ContractError("qp: H is not symmetric");
  llt_.compute(2.0 * H);
  if (llt_.info() != Eigen::Success)
    throw ContractError("qp: H must be positive definite for the dual active-set method");
  const Eigen::Index n = H.rows();
  J0_ = llt_.matrixU().solve(Eigen::MatrixXd::Identity(n, n));
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kEps = std::numeric_limits<double>::epsilon();

// Active-set factorization: J^T N_active = [R; 0], with R upper triangular.
struct Factors {
  Eigen::MatrixXd J;
  Eigen::MatrixXd R;
  Eigen::Index q = 0;
  double r_norm = 1.0;

  void directions(const Eigen::VectorXd& np, Eigen::VectorXd& d, Eigen::VectorXd& z,
                  Eigen::VectorXd& r) const {
    const Eigen::Index n = J.rows();
    d.noalias() = J.transpose() * np;
    z.noalias() = J.rightCols(n - q) * d.tail(n - q);
    r = R.topLeftCorner(q, q).triangularView<Eigen::Upper>().solve(d.head(q));
  }

  // Appends the constraint whose d = J^T n_p is given. False when it is
  // linearly dependent on the active set.
  bool add(Eigen::VectorXd& d) {
    const Eigen::Index n = J.rows();
    for (Eigen::Index j = n - 1; j > q; --j) {
      if (d(j) == 0.0) continue;
      Eigen::JacobiRotation<double> g;
      double h = 0.0;
      g.makeGivens(d(j - 1), d(j), &h);
      J.applyOnTheRight(j - 1, j, g);
      d(j - 1) = h;
      d(j) = 0.0;
    }
    if (std::abs(d(q)) <= kEps * r_norm) return false;
    R.col(q).head(q + 1) = d.head(q + 1);
    r_norm = std::max(r_norm, std::abs(d(q)));
    ++q;
    return true;
  }

  // Removes active position `pos`, restoring the triangular shape of R.
  void remove(Eigen::Index pos) {
    for (Eigen::Index i = pos; i + 1 < q; ++i) R.col(i) = R.col(i + 1);
    --q;
    R.col(q).setZero();
    for (Eigen::Index j = pos; j < q; ++j) {
      Eigen::JacobiRotation<double> g;
      double h = 0.0;
      g.makeGivens(R(j, j), R(j + 1, j), &h);
      R.block(j, j, 2, q - j).applyOnTheLeft(0, 1, g.adjoint());
      R(j + 1, j) = 0.0;
      J.applyOnTheRight(j, j + 1, g);
    }
  }
};

}  // namespace

QpResult QpSolver::solve(const Eigen::VectorXd& G, const Eigen::MatrixXd& Omega,
                         const Eigen::VectorXd& omega, const Eigen::MatrixXd& A_eq,
                         const Eigen::VectorXd& b_eq, int max_iterations) const {
  const Eigen::Index n = dim();
  const Eigen::Index m = Omega.rows();
  const Eigen::Index meq = A_eq.rows();
  if (G.size() != n) throw ShapeError("qp: G has wrong length");
  if (m > 0 && Omega.cols() != n) throw ShapeError("qp: Omega has wrong column count");
  if (omega.size() != m) throw ShapeError("qp: omega length must match Omega rows");
  if (meq > 0 && A_eq.cols() != n) throw ShapeError("qp: A_eq has wrong column count");
  if (b_eq.size() != meq) throw ShapeError("qp: b_eq length must match A_eq rows");
  if (max_iterations <= 0) max_iterations = static_cast<int>(10 * (n + m + meq) + 50);

  // Internally: min 1/2 x^T (2H) x + g0^T x with g0 = -G, constraints
  // n_i^T x >= b_i where n_i = -Omega_i and b_i = -omega_i.
  Factors f;
  f.J = J0_;
  f.R = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd x = llt_.solve(G);

  std::vector<Eigen::Index> active;  // inequality rows, in active-set order
  Eigen::VectorXd u = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd d(n), z(n), r;
  QpResult out;
  out.multipliers = Eigen::VectorXd::Zero(m);
  out.eq_multipliers = Eigen::VectorXd::Zero(meq);

  // Equalities first; they stay active.
  std::vector<Eigen::Index> eq_pos(static_cast<std::size_t>(meq), -1);
  for (Eigen::Index i = 0; i < meq; ++i) {
    const Eigen::VectorXd np = A_eq.row(i).transpose();
    f.directions(np, d, z, r);
    const double zn = z.dot(np);
    const double t2 = z.squaredNorm() > kEps ? (b_eq(i) - np.dot(x)) / zn : 0.0;
    x += t2 * z;
    u.head(f.q) -= t2 * r;
    const Eigen::Index pos = f.q;
    if (f.add(d)) {
      u(pos) = t2;
      eq_pos[static_cast<std::size_t>(i)] = pos;
    }
  }
  const Eigen::Index n_eq_active = f.q;

  std::vector<char> is_active(static_cast<std::size_t>(m), 0);
  Eigen::VectorXd s(m);
  auto slack = [&](Eigen::Index i) { return omega(i) - Omega.row(i).dot(x); };

  out.status = QpStatus::MaxIterations;
  int iter = 0;
  while (iter < max_iterations) {
    ++iter;
    Eigen::Index ip = -1;
    double worst = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (is_active[static_cast<std::size_t>(i)]) continue;
      s(i) = slack(i);
      const double tol = 1e-11 * (1.0 + std::abs(omega(i)));
      if (s(i) < -tol && s(i) < worst) {
        worst = s(i);
        ip = i;
      }
    }
    if (ip < 0) {
      out.status = QpStatus::Optimal;
      break;
    }

    const Eigen::VectorXd np = -Omega.row(ip).transpose();
    double u_plus = 0.0;
    double s_ip = s(ip);
    bool infeasible = false;
    for (;;) {
      f.directions(np, d, z, r);
      double t1 = kInf;
      Eigen::Index drop = -1;
      for (Eigen::Index k = n_eq_active; k < f.q; ++k) {
        if (r(k) > 0.0 && u(k) / r(k) < t1) {
          t1 = u(k) / r(k);
          drop = k;
        }
      }
      const double zn = z.dot(np);
      const double t2 = z.squaredNorm() > kEps * kEps && zn > 0.0 ? -s_ip / zn : kInf;
      const double t = std::min(t1, t2);
      if (t == kInf) {
        infeasible = true;
        break;
      }
      if (t2 == kInf) {
        u.head(f.q) -= t * r;
        u_plus += t;
      } else {
        x += t * z;
        u.head(f.q) -= t * r;
        u_plus += t;
        if (t == t2) {
          const Eigen::Index pos = f.q;
          if (!f.add(d)) {
            infeasible = true;
            break;
          }
          u(pos) = u_plus;
          active.push_back(ip);
          is_active[static_cast<std::size_t>(ip)] = 1;
          break;
        }
      }
      // Partial step: the blocking constraint leaves the active set.
      const std::size_t slot = static_cast<std::size_t>(drop - n_eq_active);
      is_active[static_cast<std::size_t>(active[slot])] = 0;
      active.erase(active.begin() + static_cast<std::ptrdiff_t>(slot));
      for (Eigen::Index k = drop; k + 1 < f.q; ++k) u(k) = u(k + 1);
      f.remove(drop);
      s_ip = omega(ip) - Omega.row(ip).dot(x);
    }
    if (infeasible) {
      out.status = QpStatus::Infeasible;
      break;
    }
  }

  out.iterations = iter;
  out.z = x;
  out.cost = x.dot(H_ * x) - G.dot(x);
  for (std::size_t k = 0; k < active.size(); ++k)
    out.multipliers(active[k]) = std::max(0.0, u(n_eq_active + static_cast<Eigen::Index>(k)));
  for (Eigen::Index i = 0; i < meq; ++i)
    if (eq_pos[static_cast<std::size_t>(i)] >= 0) out.eq_multipliers(i) = u(eq_pos[static_cast<std::size_t>(i)]);
  kkt_residuals(H_, G, Omega, omega, A_eq, b_eq, out);
  return out;
}

void kkt_residuals(const Eigen::MatrixXd& H, const Eigen::VectorXd& G, const Eigen::MatrixXd& Omega,
                   const Eigen::VectorXd& omega, const Eigen::MatrixXd& A_eq,
                   const Eigen::VectorXd& b_eq, QpResult& result) {
  const Eigen::VectorXd& z = result.z;
  Eigen::VectorXd grad = 2.0 * H * z - G;
  if (Omega.rows() > 0) grad += Omega.transpose() * result.multipliers;
  if (A_eq.rows() > 0) grad -= A_eq.transpose() * result.eq_multipliers;
  result.stationarity_residual = grad.cwiseAbs().maxCoeff();
  double primal = 0.0;
  if (Omega.rows() > 0) primal = std::max(primal, (Omega * z - omega).maxCoeff());
  if (A_eq.rows() > 0) primal = std::max(primal, (A_eq * z - b_eq).cwiseAbs().maxCoeff());
  result.primal_residual = primal;
}

QpResult solve_qp(const Eigen::MatrixXd& H, const Eigen::VectorXd& G,
                  const Eigen::MatrixXd& Omega, const Eigen::VectorXd& omega,
                  const Eigen::VectorXd& lower, const Eigen::VectorXd& upper) {
  const Eigen::Index n = H.rows();
  if (lower.size() != 0 && lower.size() != n) throw ShapeError("solve_qp: lower bound length");
  if (upper.size() != 0 && upper.size() != n) throw ShapeError("solve_qp: upper bound length");
  std::vector<std::pair<Eigen::Index, double>> rows;  // (+-(i+1), bound)
  for (Eigen::Index i = 0; i < n; ++i) {
    if (upper.size() && std::isfinite(upper(i))) rows.emplace_back(i + 1, upper(i));
    if (lower.size() && std::isfinite(lower(i))) rows.emplace_back(-(i + 1), -lower(i));
  }
  const Eigen::Index m0 = Omega.rows();
  Eigen::MatrixXd Om = Eigen::MatrixXd::Zero(m0 + static_cast<Eigen::Index>(rows.size()), n);
  Eigen::VectorXd om(Om.rows());
  if (m0 > 0) {
    Om.topRows(m0) = Omega;
    om.head(m0) = omega;
  }
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto [signed_i, b] = rows[k];
    const Eigen::Index row = m0 + static_cast<Eigen::Index>(k);
    Om(row, std::abs(signed_i) - 1) = signed_i > 0 ? 1.0 : -1.0;
    om(row) = b;
  }
  return QpSolver(H).solve(G, Om, om);
}

}  // namespace midpc::oracle
