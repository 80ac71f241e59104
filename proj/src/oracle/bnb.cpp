#include <chrono>
#include <cmath>
#include <limits>
#include <ostream>
#include <queue>

#include "midpc/oracle/miqp.hpp"
#include "midpc/util/errors.hpp"
#include "midpc/util/format.hpp"

namespace midpc::oracle {

const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::Infeasible: return "infeasible";
    case SolveStatus::NodeLimit: return "node_limit";
  }
  return "?";
}

namespace {

using Clock = std::chrono::steady_clock;

struct Node {
  std::vector<int> lo, hi;
  double bound = 0.0;
  Eigen::VectorXd z;
  std::size_t depth = 0;
  std::size_t id = 0;
};

struct NodeOrder {
  // Lowest bound first, then deeper, then older.
  bool operator()(const Node& a, const Node& b) const {
    if (a.bound != b.bound) return a.bound > b.bound;
    if (a.depth != b.depth) return a.depth < b.depth;
    return a.id > b.id;
  }
};

// QP relaxation of `p` with integer variable i restricted to [lo_i, hi_i];
// fixed variables become equality rows.
class Relaxation {
 public:
  explicit Relaxation(const MiqpProblem& p) : p_(p), solver_(p.H) {}

  QpResult solve(const std::vector<int>& lo, const std::vector<int>& hi, OracleSolution& stats,
                 bool count_node = true) {
    const std::size_t ni = p_.integer_indices.size();
    std::size_t n_ineq = 0, n_eq = 0;
    for (std::size_t i = 0; i < ni; ++i) {
      if (lo[i] == hi[i]) {
        ++n_eq;
        continue;
      }
      if (lo[i] > p_.integer_bounds[i].first) ++n_ineq;
      if (hi[i] < p_.integer_bounds[i].second) ++n_ineq;
    }
    const Eigen::Index m0 = p_.Omega.rows();
    const Eigen::Index n = p_.dim();
    Omega_.resize(m0 + static_cast<Eigen::Index>(n_ineq), n);
    omega_.resize(Omega_.rows());
    Omega_.topRows(m0) = p_.Omega;
    omega_.head(m0) = p_.omega;
    Omega_.bottomRows(static_cast<Eigen::Index>(n_ineq)).setZero();
    Aeq_ = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n_eq), n);
    beq_.resize(static_cast<Eigen::Index>(n_eq));
    Eigen::Index r = m0, e = 0;
    for (std::size_t i = 0; i < ni; ++i) {
      const Eigen::Index col = p_.integer_indices[i];
      if (lo[i] == hi[i]) {
        Aeq_(e, col) = 1.0;
        beq_(e++) = lo[i];
        continue;
      }
      if (lo[i] > p_.integer_bounds[i].first) {
        Omega_(r, col) = -1.0;
        omega_(r++) = -lo[i];
      }
      if (hi[i] < p_.integer_bounds[i].second) {
        Omega_(r, col) = 1.0;
        omega_(r++) = hi[i];
      }
    }
    QpResult res = solver_.solve(p_.G, Omega_, omega_, Aeq_, beq_);
    if (count_node) ++stats.nodes_explored;
    if (res.status == QpStatus::Optimal) {
      stats.max_primal_residual = std::max(stats.max_primal_residual, res.primal_residual);
      stats.max_stationarity_residual =
          std::max(stats.max_stationarity_residual, res.stationarity_residual);
    }
    return res;
  }

 private:
  const MiqpProblem& p_;
  QpSolver solver_;
  Eigen::MatrixXd Omega_, Aeq_;
  Eigen::VectorXd omega_, beq_;
};

std::vector<int> lower_bounds(const MiqpProblem& p) {
  std::vector<int> v;
  for (const auto& b : p.integer_bounds) v.push_back(b.first);
  return v;
}

std::vector<int> upper_bounds(const MiqpProblem& p) {
  std::vector<int> v;
  for (const auto& b : p.integer_bounds) v.push_back(b.second);
  return v;
}

}  // namespace

OracleSolution branch_and_bound(const MiqpProblem& problem, const BnbOptions& options) {
  problem.validate();
  const auto start = Clock::now();
  OracleSolution out;
  Relaxation relax(problem);
  const std::size_t ni = problem.integer_indices.size();
  double incumbent = std::numeric_limits<double>::infinity();

  std::priority_queue<Node, std::vector<Node>, NodeOrder> open;
  std::size_t next_id = 0;
  bool hit_limit = false;

  auto consider = [&](Node node, double parent_bound) {
    const QpResult res = relax.solve(node.lo, node.hi, out);
    if (res.status != QpStatus::Optimal) return;
    node.bound = res.cost + problem.constant;
    node.z = res.z;
    if (node.bound < parent_bound - 1e-7 * (1.0 + std::abs(parent_bound))) ++out.bound_violations;
    if (node.bound >= incumbent - options.prune_tolerance) return;
    node.id = next_id++;
    open.push(std::move(node));
  };

  Node root{lower_bounds(problem), upper_bounds(problem), 0.0, {}, 0, 0};
  consider(root, -std::numeric_limits<double>::infinity());

  while (!open.empty()) {
    Node node = open.top();
    open.pop();
    if (node.bound >= incumbent - options.prune_tolerance) continue;

    // Most fractional integer variable.
    std::size_t branch = ni;
    double best_frac = options.integrality_tolerance;
    for (std::size_t i = 0; i < ni; ++i) {
      const double v = node.z(problem.integer_indices[i]);
      const double frac = std::abs(v - std::round(v));
      if (frac > best_frac) {
        best_frac = frac;
        branch = i;
      }
    }

    if (branch == ni) {
      // Integral within tolerance: polish with all integers fixed.
      Node fixed = node;
      bool already = true;
      for (std::size_t i = 0; i < ni; ++i) {
        const int v = static_cast<int>(std::lround(node.z(problem.integer_indices[i])));
        if (fixed.lo[i] != v || fixed.hi[i] != v) already = false;
        fixed.lo[i] = fixed.hi[i] = v;
      }
      Eigen::VectorXd z = node.z;
      double cost = node.bound;
      if (!already) {
        const QpResult res = relax.solve(fixed.lo, fixed.hi, out, false);
        if (res.status != QpStatus::Optimal) continue;
        z = res.z;
        cost = res.cost + problem.constant;
      }
      for (std::size_t i = 0; i < ni; ++i) z(problem.integer_indices[i]) = fixed.lo[i];
      if (cost < incumbent) {
        incumbent = cost;
        out.z = z;
        out.cost = cost;
        out.status = SolveStatus::Optimal;
      }
      continue;
    }

    if (out.nodes_explored + 2 > options.node_limit) {
      hit_limit = true;
      break;
    }
    const double v = node.z(problem.integer_indices[branch]);
    Node down = node, up = node;
    down.hi[branch] = static_cast<int>(std::floor(v));
    up.lo[branch] = static_cast<int>(std::ceil(v));
    down.depth = up.depth = node.depth + 1;
    down.z.resize(0);
    up.z.resize(0);
    consider(std::move(down), node.bound);
    consider(std::move(up), node.bound);
  }

  if (hit_limit) out.status = SolveStatus::NodeLimit;
  out.wall_time = std::chrono::duration<double>(Clock::now() - start).count();
  return out;
}

OracleSolution brute_force(const MiqpProblem& problem, std::uint64_t limit) {
  problem.validate();
  const auto start = Clock::now();
  const std::size_t ni = problem.integer_indices.size();
  double count = 1.0;
  for (const auto& b : problem.integer_bounds) count *= static_cast<double>(b.second - b.first + 1);
  if (count > static_cast<double>(limit))
    throw ConfigError("brute_force: " + std::to_string(static_cast<unsigned long long>(count)) +
                      " integer assignments exceed the limit of " + std::to_string(limit));

  OracleSolution out;
  Relaxation relax(problem);
  std::vector<int> v = lower_bounds(problem);
  const std::vector<int> hi = upper_bounds(problem);
  double best = std::numeric_limits<double>::infinity();
  for (;;) {
    const QpResult res = relax.solve(v, v, out);
    if (res.status == QpStatus::Optimal) {
      const double cost = res.cost + problem.constant;
      if (cost < best) {
        best = cost;
        out.z = res.z;
        for (std::size_t i = 0; i < ni; ++i) out.z(problem.integer_indices[i]) = v[i];
        out.cost = cost;
        out.status = SolveStatus::Optimal;
      }
    }
    std::size_t i = 0;
    while (i < ni && v[i] == hi[i]) {
      v[i] = problem.integer_bounds[i].first;
      ++i;
    }
    if (i == ni) break;
    ++v[i];
  }
  out.wall_time = std::chrono::duration<double>(Clock::now() - start).count();
  return out;
}

MpcStep oracle_mpc_step(const plant::Benchmark& bench, const Eigen::VectorXd& x,
                        const Eigen::MatrixXd& d_window, std::size_t horizon, bool soft_state,
                        const BnbOptions& options) {
  const auto start = Clock::now();
  const MiqpProblem p = condense(bench, x, d_window, horizon, soft_state);
  MpcStep step;
  step.solution = branch_and_bound(p, options);
  step.solution.wall_time = std::chrono::duration<double>(Clock::now() - start).count();
  if (step.solution.z.size() > 0) {
    step.u = step.solution.z.head(p.n_u);
    step.delta = step.solution.z.segment(p.n_u, p.n_delta);
  }
  return step;
}

void write_diagnostics_header(std::ostream& out) {
  out << "step,cost,nodes_explored,wall_time,status\n";
}

void write_diagnostics_row(std::ostream& out, std::size_t step, const OracleSolution& s) {
  out << step << ',' << format_double(s.cost) << ',' << s.nodes_explored << ','
      << format_double(s.wall_time) << ',' << to_string(s.status) << '\n';
}

}  // namespace midpc::oracle
