// Pipeline driver: datagen | train | simulate | compare | report.
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "midpc/cli/commands.hpp"
#include "midpc/simd/kernels.hpp"
#include "midpc/util/errors.hpp"

namespace {

constexpr int kConfigError = 2;
constexpr int kRuntimeError = 3;

struct Common {
  std::string profile = "full";
  std::string config_file;
  std::vector<std::string> overrides;
  std::string output;
  bool deterministic = false;
  int workers = 0;
  bool quiet = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--profile", c.profile, "Base profile: full, ci or smoke")->capture_default_str();
  cmd->add_option("-c,--config", c.config_file, "JSON config merged over the profile");
  cmd->add_option("--set", c.overrides, "Override a config field, e.g. --set train.max_epochs=50");
  cmd->add_option("-o,--out", c.output, "Output directory (overrides output_dir)");
  cmd->add_flag("--deterministic", c.deterministic, "Single-threaded execution");
  cmd->add_option("-j,--workers", c.workers, "Worker threads")->check(CLI::PositiveNumber);
  cmd->add_flag("-q,--quiet", c.quiet, "No progress output");
}

midpc::cli::RunConfig resolve(const Common& c) {
  auto overrides = c.overrides;
  if (!c.output.empty()) overrides.push_back("output_dir=\"" + c.output + "\"");
  if (c.deterministic) overrides.push_back("deterministic=true");
  if (c.workers > 0) overrides.push_back("workers=" + std::to_string(c.workers));
  return midpc::cli::resolve_config(c.profile, c.config_file, overrides);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mixed-integer differentiable predictive control pipeline"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "midpc 1.0");

  Common common;
  std::string data_dir, checkpoint, controller = "policy", report_out;
  std::vector<std::string> run_dirs;
  bool print_config = false;

  auto* datagen = app.add_subcommand("datagen", "Write train/dev/test datasets and test scenarios");
  add_common(datagen, common);

  auto* train = app.add_subcommand("train", "Train a policy and write policy.json and history.csv");
  add_common(train, common);
  train->add_option("--data", data_dir, "Directory with train.csv and dev.csv (default: generate)");

  auto* simulate = app.add_subcommand("simulate", "Closed-loop runs of one controller");
  add_common(simulate, common);
  simulate->add_option("--controller", controller, "policy, oracle or zero")->capture_default_str();
  simulate->add_option("--checkpoint", checkpoint, "policy.json for the policy controller");

  auto* compare = app.add_subcommand("compare", "Policy against the MI-MPC oracle on identical scenarios");
  add_common(compare, common);
  compare->add_option("--checkpoint", checkpoint, "policy.json, or 'oracle' for a self-comparison")
      ->required();

  auto* report = app.add_subcommand("report", "Tabulate summary.json files from compare runs");
  report->add_option("runs", run_dirs, "Run directories")->required();
  report->add_option("-o,--out", report_out, "Also write report.md and report.csv here");

  auto* config = app.add_subcommand("config", "Print the resolved configuration");
  add_common(config, common);
  config->callback([&] { print_config = true; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigError;
  }

  std::ostream* log = common.quiet ? nullptr : &std::cerr;
  try {
    if (*report) {
      midpc::cli::cmd_report(run_dirs, report_out, std::cout);
      return 0;
    }
    const auto cfg = resolve(common);
    if (print_config) {
      std::cout << cfg.to_json().dump(2) << '\n';
      return 0;
    }
    if (log) *log << "kernels: " << midpc::simd::to_string(midpc::simd::active_level()) << '\n';
    if (*datagen) midpc::cli::cmd_datagen(cfg, log);
    if (*train) midpc::cli::cmd_train(cfg, data_dir, log);
    if (*simulate) midpc::cli::cmd_simulate(cfg, controller, checkpoint, log);
    if (*compare) midpc::cli::cmd_compare(cfg, checkpoint, log);
  } catch (const midpc::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const midpc::ShapeError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return 0;
}
