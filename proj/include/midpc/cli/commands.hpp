#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "midpc/cli/run_config.hpp"
#include "midpc/harness/harness.hpp"
#include "midpc/oracle/miqp.hpp"

namespace midpc::cli {

/// Train/dev sets from `data_dir` (train.csv, dev.csv) or, when empty,
/// generated from the config. A horizon that differs from the config is a
/// ConfigError.
plant::DatasetPair load_or_generate(const RunConfig& cfg, const std::string& data_dir);

std::vector<harness::Scenario> test_scenarios(const RunConfig& cfg);

struct Evaluation {
  std::vector<harness::ClosedLoopRun> runs;
  /// Oracle controllers only: per run, per step.
  std::vector<std::vector<oracle::OracleSolution>> diagnostics;
};

Evaluation evaluate_policy(const RunConfig& cfg, const policy::Policy& policy,
                           const std::vector<harness::Scenario>& scenarios);
Evaluation evaluate_oracle(const RunConfig& cfg, std::size_t horizon,
                           const std::vector<harness::Scenario>& scenarios);

/// Steps where the soft-state oracle used a positive slack.
std::size_t slack_active_steps(const Evaluation& oracle_eval, std::size_t horizon);

struct TrainOutcome {
  policy::Policy policy;
  trainer::TrainResult result;
  double test_loss = 0.0;
};

struct Comparison {
  harness::MetricsReport policy;
  harness::MetricsReport oracle;
  Evaluation policy_eval;
  Evaluation oracle_eval;
  std::size_t slack_steps = 0;
};

/// Each command writes into cfg.output_dir, starting with config.json.
/// `log` receives progress lines and may be null.
void cmd_datagen(const RunConfig& cfg, std::ostream* log);
TrainOutcome cmd_train(const RunConfig& cfg, const std::string& data_dir, std::ostream* log);
/// controller: "policy" (needs a checkpoint), "oracle" or "zero".
harness::MetricsReport cmd_simulate(const RunConfig& cfg, const std::string& controller,
                                    const std::string& checkpoint, std::ostream* log);
/// checkpoint "oracle" compares the oracle against itself.
Comparison cmd_compare(const RunConfig& cfg, const std::string& checkpoint, std::ostream* log);
/// Collects summary.json from each run directory into one table (markdown to
/// `out`, plus report.md and report.csv in `output_dir` when it is non-empty).
void cmd_report(const std::vector<std::string>& run_dirs, const std::string& output_dir,
                std::ostream& out);

/// Loads a checkpoint and checks that its horizon matches the config.
policy::Policy load_policy(const RunConfig& cfg, const std::string& checkpoint);

}  // namespace midpc::cli
