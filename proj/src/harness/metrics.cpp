#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "midpc/harness/harness.hpp"
#include "midpc/trainer/loss.hpp"
#include "midpc/util/errors.hpp"
#include "midpc/util/format.hpp"

namespace midpc::harness {
namespace {

double run_stage_cost(const ClosedLoopRun& run, std::size_t k, const plant::CostWeights& w) {
  const auto i = static_cast<Eigen::Index>(k);
  return trainer::stage_cost(run.x.row(i).transpose(), w.r, run.u.row(i).transpose(),
                             run.delta.row(i).transpose(), w);
}

}  // namespace

double mean_stepwise_loss(const std::vector<ClosedLoopRun>& runs, const plant::CostWeights& w) {
  if (runs.empty()) throw ContractError("mean_stepwise_loss: no runs");
  const std::size_t steps = runs.front().steps();
  double sum = 0.0;
  for (const auto& run : runs) {
    if (run.steps() != steps) throw ContractError("mean_stepwise_loss: runs differ in length");
    for (std::size_t k = 0; k < steps; ++k) sum += run_stage_cost(run, k, w);
  }
  if (steps == 0) throw ContractError("mean_stepwise_loss: runs have no steps");
  return sum / static_cast<double>(steps * runs.size());
}

namespace {

void require_same_scenarios(const std::vector<ClosedLoopRun>& a, const std::vector<ClosedLoopRun>& b) {
  if (a.size() != b.size()) throw ContractError("runs cover different numbers of scenarios");
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].steps() != b[i].steps())
      throw ContractError("run " + std::to_string(i) + " differs in length");
    if (a[i].x.row(0) != b[i].x.row(0))
      throw ContractError("run " + std::to_string(i) + " starts from a different state");
    const Eigen::Index n = static_cast<Eigen::Index>(a[i].steps());
    if (a[i].d.topRows(n) != b[i].d.topRows(n))
      throw ContractError("run " + std::to_string(i) + " sees different disturbances");
  }
}

}  // namespace

double relative_suboptimality(const std::vector<ClosedLoopRun>& policy_runs,
                              const std::vector<ClosedLoopRun>& oracle_runs,
                              const plant::CostWeights& w) {
  require_same_scenarios(policy_runs, oracle_runs);
  const double lp = mean_stepwise_loss(policy_runs, w);
  const double lo = mean_stepwise_loss(oracle_runs, w);
  if (!(lo > 0.0)) throw ContractError("relative_suboptimality: reference loss must be positive");
  return (lp - lo) / lo;
}

std::vector<Eigen::MatrixXd> error_traces(const std::vector<ClosedLoopRun>& policy_runs,
                                          const std::vector<ClosedLoopRun>& oracle_runs) {
  require_same_scenarios(policy_runs, oracle_runs);
  std::vector<Eigen::MatrixXd> out;
  for (std::size_t i = 0; i < policy_runs.size(); ++i) out.push_back(oracle_runs[i].x - policy_runs[i].x);
  return out;
}

double mean_inference_time(const std::vector<ClosedLoopRun>& runs) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : runs) {
    sum += std::accumulate(r.inference_s.begin(), r.inference_s.end(), 0.0);
    n += r.inference_s.size();
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

ViolationStats violation_stats(const std::vector<ClosedLoopRun>& runs,
                               const plant::ConstraintSpec& c) {
  constexpr double kTol = 1e-6;
  ViolationStats s;
  const Eigen::Index nx = c.x_max.size(), nu = c.u_min.size();
  for (Eigen::Index i = 0; i < nx; ++i) {
    s.constraints.push_back({"x" + std::to_string(i + 1) + "_max"});
    s.constraints.push_back({"x" + std::to_string(i + 1) + "_min"});
  }
  for (Eigen::Index j = 0; j < nu; ++j) s.constraints.push_back({"u" + std::to_string(j + 1) + "_min"});
  s.constraints.push_back({"u_sum_max"});

  std::size_t state_bad = 0, input_bad = 0;
  std::vector<std::size_t> bad(s.constraints.size(), 0);
  auto record = [&](std::size_t idx, double excess) {
    excess = std::max(0.0, excess);
    auto& v = s.constraints[idx];
    v.max_excess = std::max(v.max_excess, excess);
    v.mean_excess += excess;
    if (excess > kTol) ++bad[idx];
    return excess > kTol;
  };
  for (const auto& run : runs) {
    for (std::size_t k = 0; k < run.steps(); ++k) {
      const auto row = static_cast<Eigen::Index>(k);
      bool state_violated = false, input_violated = false;
      for (Eigen::Index i = 0; i < nx; ++i) {
        const double x = run.x(row + 1, i);
        state_violated |= record(static_cast<std::size_t>(2 * i), x - c.x_max(i));
        state_violated |= record(static_cast<std::size_t>(2 * i + 1), c.x_min(i) - x);
      }
      for (Eigen::Index j = 0; j < nu; ++j)
        input_violated |= record(static_cast<std::size_t>(2 * nx + j), c.u_min(j) - run.u(row, j));
      input_violated |= record(static_cast<std::size_t>(2 * nx + nu), run.u.row(row).sum() - c.u_sum_max);
      state_bad += state_violated;
      input_bad += input_violated;
      ++s.steps;
    }
  }
  const double steps = static_cast<double>(std::max<std::size_t>(s.steps, 1));
  for (std::size_t i = 0; i < s.constraints.size(); ++i) {
    auto& v = s.constraints[i];
    v.mean_excess /= steps;
    v.violating_fraction = static_cast<double>(bad[i]) / steps;
    if (i < static_cast<std::size_t>(2 * nx))
      s.state_max_excess = std::max(s.state_max_excess, v.max_excess);
    else
      s.input_max_excess = std::max(s.input_max_excess, v.max_excess);
  }
  s.state_violating_fraction = static_cast<double>(state_bad) / steps;
  s.input_violating_fraction = static_cast<double>(input_bad) / steps;
  return s;
}

MetricsReport summarize(const std::string& controller, const std::vector<ClosedLoopRun>& runs,
                        const plant::Benchmark& bench,
                        const std::vector<ClosedLoopRun>* oracle_runs,
                        std::optional<std::size_t> ntp) {
  MetricsReport r;
  r.controller = controller;
  r.horizon = runs.empty() ? 0 : runs.front().horizon;
  for (const auto& run : runs) r.failed_runs += run.failed;
  r.l_mean = mean_stepwise_loss(runs, bench.weights);
  if (oracle_runs) r.rsm = relative_suboptimality(runs, *oracle_runs, bench.weights);
  r.mit = mean_inference_time(runs);
  r.ntp = ntp;
  r.violations = violation_stats(runs, bench.constraints);
  return r;
}

void write_trajectory_csv(std::ostream& out, const ClosedLoopRun& run, const plant::CostWeights& w) {
  const Eigen::Index nx = run.x.cols(), nu = run.u.cols(), nd = run.delta.cols(), nw = run.d.cols();
  out << "step";
  for (Eigen::Index i = 0; i < nx; ++i) out << ",x" << i + 1;
  for (Eigen::Index i = 0; i < nu; ++i) out << ",u" << i + 1;
  if (nd == 1) out << ",delta";
  else
    for (Eigen::Index i = 0; i < nd; ++i) out << ",delta" << i + 1;
  for (Eigen::Index i = 0; i < nw; ++i) out << ",d" << i + 1;
  out << ",stage_cost,inference_s\n";
  for (std::size_t k = 0; k <= run.steps(); ++k) {
    const auto row = static_cast<Eigen::Index>(k);
    out << k;
    for (Eigen::Index i = 0; i < nx; ++i) out << ',' << format_double(run.x(row, i));
    if (k == run.steps()) {
      out << std::string(static_cast<std::size_t>(nu + nd + nw + 2), ',') << '\n';
      break;
    }
    for (Eigen::Index i = 0; i < nu; ++i) out << ',' << format_double(run.u(row, i));
    for (Eigen::Index i = 0; i < nd; ++i) out << ',' << format_double(run.delta(row, i));
    for (Eigen::Index i = 0; i < nw; ++i) out << ',' << format_double(run.d(row, i));
    out << ',' << format_double(run_stage_cost(run, k, w)) << ','
        << format_double(run.inference_s[k]) << '\n';
  }
}

void write_metrics_csv(std::ostream& out, const std::vector<MetricsReport>& reports) {
  out << "metric";
  for (const auto& r : reports) out << ',' << r.controller;
  out << '\n';
  auto row = [&](const char* name, auto&& value) {
    out << name;
    for (const auto& r : reports) out << ',' << value(r);
    out << '\n';
  };
  row("horizon", [](const MetricsReport& r) { return std::to_string(r.horizon); });
  row("l_mean", [](const MetricsReport& r) { return format_fixed(r.l_mean, 4); });
  row("rsm_percent", [](const MetricsReport& r) {
    return r.rsm ? format_fixed(100.0 * *r.rsm, 2) : std::string();
  });
  row("mit_s", [](const MetricsReport& r) { return format_double(r.mit); });
  row("ntp", [](const MetricsReport& r) { return r.ntp ? std::to_string(*r.ntp) : std::string(); });
  row("state_max_excess", [](const MetricsReport& r) { return format_double(r.violations.state_max_excess); });
  row("state_violating_fraction",
      [](const MetricsReport& r) { return format_double(r.violations.state_violating_fraction); });
  row("input_max_excess", [](const MetricsReport& r) { return format_double(r.violations.input_max_excess); });
  row("input_violating_fraction",
      [](const MetricsReport& r) { return format_double(r.violations.input_violating_fraction); });
  row("failed_runs", [](const MetricsReport& r) { return std::to_string(r.failed_runs); });
}

}  // namespace midpc::harness
