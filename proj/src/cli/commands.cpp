#include "midpc/cli/commands.hpp"

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include "midpc/util/errors.hpp"
#include "midpc/util/format.hpp"
#include "midpc/util/parallel.hpp"

namespace midpc::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path prepare_output(const RunConfig& cfg) {
  const fs::path dir(cfg.output_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir))
    throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
  std::ofstream out(dir / "config.json");
  if (!out) throw IoError("output directory " + dir.string() + " is not writable");
  out << cfg.to_json().dump(2) << '\n';
  return dir;
}

std::ofstream open_out(const fs::path& path) {
  std::error_code ec;
  fs::create_directories(path.parent_path(), ec);
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

void say(std::ostream* log, const std::string& line) {
  if (log) *log << line << std::endl;
}

json violations_json(const harness::ViolationStats& v) {
  json per = json::array();
  for (const auto& c : v.constraints)
    per.push_back({{"name", c.name},
                   {"max_excess", c.max_excess},
                   {"mean_excess", c.mean_excess},
                   {"violating_fraction", c.violating_fraction}});
  return {{"steps", v.steps},
          {"state_max_excess", v.state_max_excess},
          {"state_violating_fraction", v.state_violating_fraction},
          {"input_max_excess", v.input_max_excess},
          {"input_violating_fraction", v.input_violating_fraction},
          {"constraints", per}};
}

json report_json(const harness::MetricsReport& r) {
  json j{{"controller", r.controller},
         {"horizon", r.horizon},
         {"l_mean", r.l_mean},
         {"mit_s", r.mit},
         {"failed_runs", r.failed_runs},
         {"violations", violations_json(r.violations)}};
  if (r.rsm) {
    j["rsm"] = *r.rsm;
    j["rsm_percent"] = format_fixed(100.0 * *r.rsm, 2);
  }
  if (r.ntp) j["ntp"] = *r.ntp;
  return j;
}

void write_runs(const fs::path& dir, const RunConfig& cfg, const Evaluation& eval,
                const plant::Benchmark& bench) {
  if (cfg.sim.trajectories)
    for (std::size_t i = 0; i < eval.runs.size(); ++i) {
      const auto& run = eval.runs[i];
      auto out = open_out(dir / "trajectories" / (run.controller + "_ic" + std::to_string(i) + ".csv"));
      harness::write_trajectory_csv(out, run, bench.weights);
    }
  if (cfg.sim.plots && !eval.runs.empty()) {
    const std::string id = eval.runs.front().controller;
    for (std::size_t i = 0; i < eval.runs.size(); ++i) {
      auto out = open_out(dir / "plots" / (id + "_ic" + std::to_string(i) + ".svg"));
      harness::write_trace_svg(out, eval.runs[i], bench.constraints);
    }
    auto out = open_out(dir / "plots" / (id + "_phase.svg"));
    harness::write_phase_svg(out, eval.runs, bench.constraints);
  }
  if (!eval.diagnostics.empty()) {
    auto out = open_out(dir / (eval.runs.front().controller + "_diagnostics.csv"));
    out << "ic,";
    oracle::write_diagnostics_header(out);
    for (std::size_t i = 0; i < eval.diagnostics.size(); ++i)
      for (std::size_t k = 0; k < eval.diagnostics[i].size(); ++k) {
        out << i << ',';
        oracle::write_diagnostics_row(out, k, eval.diagnostics[i][k]);
      }
  }
}

void report_failures(const Evaluation& e, std::ostream* log) {
  for (std::size_t i = 0; i < e.runs.size(); ++i)
    if (e.runs[i].failed)
      say(log, e.runs[i].controller + " run " + std::to_string(i) + " failed at step " +
                   std::to_string(e.runs[i].failed_at) + ": " + e.runs[i].failure);
}

}  // namespace

plant::DatasetPair load_or_generate(const RunConfig& cfg, const std::string& data_dir) {
  const auto bench = cfg.make_benchmark();
  if (data_dir.empty())
    return plant::build_dataset(cfg.data.seed, cfg.data.n_train, cfg.data.n_dev, cfg.horizon,
                                bench.constraints, cfg.disturbance);
  plant::DatasetPair pair;
  pair.train = plant::load_dataset((fs::path(data_dir) / "train.csv").string());
  pair.dev = plant::load_dataset((fs::path(data_dir) / "dev.csv").string());
  for (const auto* d : {&pair.train, &pair.dev})
    if (d->horizon != cfg.horizon)
      throw ConfigError("dataset in " + data_dir + " has horizon " + std::to_string(d->horizon) +
                        " but the config asks for " + std::to_string(cfg.horizon));
  return pair;
}

std::vector<harness::Scenario> test_scenarios(const RunConfig& cfg) {
  return harness::make_test_scenarios(cfg.sim.seed, cfg.sim.n_ic, cfg.sim.n_sim,
                                      cfg.make_benchmark().constraints, cfg.sim.shared_disturbance,
                                      cfg.disturbance);
}

Evaluation evaluate_policy(const RunConfig& cfg, const policy::Policy& policy,
                           const std::vector<harness::Scenario>& scenarios) {
  const auto bench = cfg.make_benchmark();
  Evaluation e;
  e.runs = harness::closed_loop_batch(
      [&] { return std::make_unique<harness::PolicyController>(policy); }, bench, scenarios,
      cfg.sim.n_sim, cfg.effective_workers(), cfg.sim.seed);
  return e;
}

Evaluation evaluate_oracle(const RunConfig& cfg, std::size_t horizon,
                           const std::vector<harness::Scenario>& scenarios) {
  const auto bench = cfg.make_benchmark();
  oracle::BnbOptions opt;
  opt.node_limit = cfg.sim.node_limit;
  Evaluation e;
  e.runs.resize(scenarios.size());
  e.diagnostics.resize(scenarios.size());
  parallel_for(scenarios.size(), cfg.effective_workers(), [&](std::size_t i) {
    harness::OracleController c(bench, horizon, cfg.sim.oracle_soft_state, opt);
    e.runs[i] = harness::closed_loop(c, bench, scenarios[i], cfg.sim.n_sim, derive_seed(cfg.sim.seed, i));
    e.diagnostics[i] = c.diagnostics();
  });
  return e;
}

std::size_t slack_active_steps(const Evaluation& oracle_eval, std::size_t horizon) {
  const auto bench = plant::make_thermal_benchmark();
  const Eigen::Index controls =
      static_cast<Eigen::Index>(horizon) * (bench.model.n_u() + bench.model.n_delta());
  std::size_t count = 0;
  for (const auto& run : oracle_eval.diagnostics)
    for (const auto& s : run) {
      const Eigen::Index slack = s.z.size() - controls;
      if (slack > 0 && s.z.tail(slack).maxCoeff() > 1e-9) ++count;
    }
  return count;
}

policy::Policy load_policy(const RunConfig& cfg, const std::string& checkpoint) {
  auto p = policy::Policy::load(checkpoint);
  if (p.config().horizon != cfg.horizon)
    throw ConfigError("checkpoint " + checkpoint + " was trained for horizon " +
                      std::to_string(p.config().horizon) + " but the config asks for " +
                      std::to_string(cfg.horizon));
  return p;
}

void cmd_datagen(const RunConfig& cfg, std::ostream* log) {
  const auto dir = prepare_output(cfg);
  const auto bench = cfg.make_benchmark();
  const auto pair = load_or_generate(cfg, {});
  plant::save_dataset((dir / "train.csv").string(), pair.train);
  plant::save_dataset((dir / "dev.csv").string(), pair.dev);
  if (cfg.data.n_test > 0)
    plant::save_dataset((dir / "test.csv").string(),
                        plant::generate_split(cfg.data.seed, plant::Split::Test, cfg.data.n_test,
                                              cfg.horizon, bench.constraints, cfg.disturbance));

  const auto scenarios = test_scenarios(cfg);
  auto ic = open_out(dir / "initial_states.csv");
  ic << "# seed=" << cfg.sim.seed << " n_ic=" << cfg.sim.n_ic << '\n' << "ic,x1,x2\n";
  auto dist = open_out(dir / "test_disturbances.csv");
  dist << "# seed=" << cfg.sim.seed << " n_sim=" << cfg.sim.n_sim
       << " shared=" << (cfg.sim.shared_disturbance ? 1 : 0) << '\n'
       << "ic,step,d1,d2\n";
  for (std::size_t i = 0; i < scenarios.size(); ++i) {
    const auto& s = scenarios[i];
    ic << i << ',' << format_double(s.x0(0)) << ',' << format_double(s.x0(1)) << '\n';
    for (Eigen::Index k = 0; k < s.d.rows(); ++k)
      dist << i << ',' << k << ',' << format_double(s.d(k, 0)) << ',' << format_double(s.d(k, 1)) << '\n';
  }
  say(log, "wrote " + std::to_string(pair.train.size()) + " train, " + std::to_string(pair.dev.size()) +
               " dev, " + std::to_string(cfg.data.n_test) + " test samples to " + dir.string());
}

TrainOutcome cmd_train(const RunConfig& cfg, const std::string& data_dir, std::ostream* log) {
  const auto bench = cfg.make_benchmark();
  const auto data = load_or_generate(cfg, data_dir);
  const auto dir = prepare_output(cfg);
  TrainOutcome out{policy::Policy(cfg.policy_config(), policy::PolicyDims::from(bench)), {}, 0.0};
  say(log, "training " + rounding::to_string(cfg.policy.strategy) + " N=" + std::to_string(cfg.horizon) +
               " with " + std::to_string(out.policy.parameter_count()) + " parameters on " +
               std::to_string(data.train.size()) + " samples");

  auto tc = cfg.train_config();
  tc.on_epoch = [&](const trainer::EpochRecord& r) {
    if (log && (r.epoch == 1 || r.epoch % 10 == 0))
      *log << "epoch " << r.epoch << " train " << format_fixed(r.train_loss, 4) << " dev "
           << format_fixed(r.dev_loss, 4) << " bad " << r.bad_count << " (" << format_fixed(r.seconds, 2)
           << " s)" << std::endl;
  };
  try {
    out.result = trainer::train(out.policy, bench, data.train, data.dev, tc);
  } catch (const trainer::TrainingDiverged& e) {
    out.result = e.partial();
    out.policy.save((dir / "policy.json").string());
    auto h = open_out(dir / "history.csv");
    trainer::write_history_csv(h, out.result.history);
    throw;
  }
  out.policy.save((dir / "policy.json").string());
  auto h = open_out(dir / "history.csv");
  trainer::write_history_csv(h, out.result.history);

  if (cfg.data.n_test > 0) {
    const auto test = plant::generate_split(cfg.data.seed, plant::Split::Test, cfg.data.n_test, cfg.horizon,
                                            bench.constraints, cfg.disturbance);
    out.test_loss = trainer::evaluate_loss(out.policy, bench, test).total;
  }
  json breakdown = json::object();
  for (const auto& b : out.policy.parameter_breakdown()) breakdown[b.component] = b.count;
  json summary{{"strategy", rounding::to_string(cfg.policy.strategy)},
               {"horizon", cfg.horizon},
               {"parameter_count", out.policy.parameter_count()},
               {"parameter_breakdown", breakdown},
               {"initial_dev_loss", out.result.initial_dev_loss},
               {"best_dev_loss", out.result.best_dev_loss},
               {"best_epoch", out.result.best_epoch},
               {"epochs_run", out.result.history.size()},
               {"stopped_early", out.result.stopped_early},
               {"seconds", out.result.seconds}};
  if (cfg.data.n_test > 0) summary["test_loss"] = out.test_loss;
  open_out(dir / "train_summary.json") << summary.dump(2) << '\n';
  say(log, "best dev loss " + format_fixed(out.result.best_dev_loss, 4) + " at epoch " +
               std::to_string(out.result.best_epoch) + "; checkpoint in " + (dir / "policy.json").string());
  return out;
}

harness::MetricsReport cmd_simulate(const RunConfig& cfg, const std::string& controller,
                                    const std::string& checkpoint, std::ostream* log) {
  const auto bench = cfg.make_benchmark();
  std::optional<policy::Policy> policy;
  if (controller == "policy") {
    if (checkpoint.empty()) throw ConfigError("simulate: the policy controller needs --checkpoint");
    policy = load_policy(cfg, checkpoint);
  } else if (controller != "oracle" && controller != "zero") {
    throw ConfigError("simulate: unknown controller '" + controller + "' (policy, oracle or zero)");
  }
  const auto dir = prepare_output(cfg);
  const auto scenarios = test_scenarios(cfg);
  Evaluation e;
  std::optional<std::size_t> ntp;
  if (policy) {
    e = evaluate_policy(cfg, *policy, scenarios);
    ntp = policy->parameter_count();
  } else if (controller == "oracle") {
    e = evaluate_oracle(cfg, cfg.horizon, scenarios);
  } else {
    e.runs = harness::closed_loop_batch(
        [&] { return std::make_unique<harness::ZeroController>(bench.model.n_u(), bench.model.n_delta(),
                                                               cfg.horizon); },
        bench, scenarios, cfg.sim.n_sim, cfg.effective_workers(), cfg.sim.seed);
  }
  report_failures(e, log);
  write_runs(dir, cfg, e, bench);
  const auto report = harness::summarize(e.runs.front().controller, e.runs, bench, nullptr, ntp);
  auto m = open_out(dir / "metrics.csv");
  harness::write_metrics_csv(m, {report});
  say(log, report.controller + ": l_mean " + format_fixed(report.l_mean, 4) + ", mit " +
               format_double(report.mit) + " s");
  return report;
}

Comparison cmd_compare(const RunConfig& cfg, const std::string& checkpoint, std::ostream* log) {
  const auto bench = cfg.make_benchmark();
  std::optional<policy::Policy> policy;
  if (checkpoint != "oracle") policy = load_policy(cfg, checkpoint);
  const auto dir = prepare_output(cfg);
  const auto scenarios = test_scenarios(cfg);

  Comparison c;
  say(log, "oracle: " + std::to_string(scenarios.size()) + " runs of " + std::to_string(cfg.sim.n_sim) +
               " steps at N=" + std::to_string(cfg.horizon));
  c.oracle_eval = evaluate_oracle(cfg, cfg.horizon, scenarios);
  std::optional<std::size_t> ntp;
  if (policy) {
    c.policy_eval = evaluate_policy(cfg, *policy, scenarios);
    ntp = policy->parameter_count();
  } else {
    c.policy_eval = c.oracle_eval;
  }
  report_failures(c.oracle_eval, log);
  report_failures(c.policy_eval, log);
  for (const auto* e : {&c.policy_eval, &c.oracle_eval})
    for (const auto& r : e->runs)
      if (r.failed)
        throw NumericalError("compare: " + r.controller + " failed; RSM needs complete runs");

  const std::string pid = policy ? c.policy_eval.runs.front().controller : "oracle_reference";
  c.oracle = harness::summarize(c.oracle_eval.runs.front().controller, c.oracle_eval.runs, bench);
  c.policy = harness::summarize(pid, c.policy_eval.runs, bench, &c.oracle_eval.runs, ntp);
  c.slack_steps = slack_active_steps(c.oracle_eval, cfg.horizon);

  write_runs(dir, cfg, c.oracle_eval, bench);
  if (policy) write_runs(dir, cfg, c.policy_eval, bench);
  auto m = open_out(dir / "metrics.csv");
  harness::write_metrics_csv(m, {c.policy, c.oracle});
  auto err = open_out(dir / "errors.csv");
  err << "ic,step,e1,e2\n";
  const auto traces = harness::error_traces(c.policy_eval.runs, c.oracle_eval.runs);
  for (std::size_t i = 0; i < traces.size(); ++i)
    for (Eigen::Index k = 0; k < traces[i].rows(); ++k)
      err << i << ',' << k << ',' << format_double(traces[i](k, 0)) << ',' << format_double(traces[i](k, 1))
          << '\n';

  std::size_t oracle_steps = 0, nodes = 0, node_limits = 0;
  for (const auto& run : c.oracle_eval.diagnostics)
    for (const auto& s : run) {
      ++oracle_steps;
      nodes += s.nodes_explored;
      node_limits += s.status == oracle::SolveStatus::NodeLimit;
    }
  json summary{{"strategy", policy ? rounding::to_string(policy->config().strategy) : "oracle"},
               {"horizon", cfg.horizon},
               {"n_ic", cfg.sim.n_ic},
               {"n_sim", cfg.sim.n_sim},
               {"policy", report_json(c.policy)},
               {"oracle", report_json(c.oracle)},
               {"oracle_soft_state", cfg.sim.oracle_soft_state},
               {"oracle_slack_active_steps", c.slack_steps},
               {"oracle_mean_nodes", oracle_steps ? double(nodes) / double(oracle_steps) : 0.0},
               {"oracle_node_limit_steps", node_limits}};
  open_out(dir / "summary.json") << summary.dump(2) << '\n';
  say(log, "l_mean policy " + format_fixed(c.policy.l_mean, 4) + ", oracle " + format_fixed(c.oracle.l_mean, 4) +
               ", RSM " + format_fixed(100.0 * c.policy.rsm.value_or(0.0), 2) + "%");
  return c;
}

void cmd_report(const std::vector<std::string>& run_dirs, const std::string& output_dir, std::ostream& out) {
  if (run_dirs.empty()) throw ConfigError("report: no run directories given");
  struct Column {
    std::string name;
    json r;
  };
  std::vector<Column> cols;
  std::map<std::string, bool> seen_oracle;
  for (const auto& d : run_dirs) {
    std::ifstream in(fs::path(d) / "summary.json");
    if (!in) throw IoError("report: " + d + " has no summary.json (run compare first)");
    const json s = json::parse(in, nullptr, false);
    if (s.is_discarded()) throw IoError("report: " + d + "/summary.json is not valid JSON");
    cols.push_back({s["policy"]["controller"].get<std::string>(), s["policy"]});
    const std::string oid = s["oracle"]["controller"].get<std::string>();
    if (!seen_oracle[oid]) {
      seen_oracle[oid] = true;
      cols.push_back({oid, s["oracle"]});
    }
  }
  struct Row {
    const char* label;
    std::function<std::string(const json&)> value;
  };
  const std::vector<Row> rows{
      {"N", [](const json& r) { return std::to_string(r["horizon"].get<std::size_t>()); }},
      {"l_mean", [](const json& r) { return format_fixed(r["l_mean"].get<double>(), 4); }},
      {"RSM (%)", [](const json& r) { return r.contains("rsm_percent") ? r["rsm_percent"].get<std::string>() : "-"; }},
      {"MIT (s)", [](const json& r) { return format_double(r["mit_s"].get<double>()); }},
      {"NTP", [](const json& r) { return r.contains("ntp") ? std::to_string(r["ntp"].get<std::size_t>()) : "-"; }},
      {"state violating fraction",
       [](const json& r) { return format_double(r["violations"]["state_violating_fraction"].get<double>()); }},
      {"max state excess",
       [](const json& r) { return format_double(r["violations"]["state_max_excess"].get<double>()); }},
  };
  std::ostringstream md, csv;
  md << "| metric |";
  csv << "metric";
  for (const auto& c : cols) {
    md << ' ' << c.name << " |";
    csv << ',' << c.name;
  }
  md << "\n|---|";
  for (std::size_t i = 0; i < cols.size(); ++i) md << "---|";
  md << '\n';
  csv << '\n';
  for (const auto& row : rows) {
    md << "| " << row.label << " |";
    csv << row.label;
    for (const auto& c : cols) {
      const std::string v = row.value(c.r);
      md << ' ' << v << " |";
      csv << ',' << (v == "-" ? "" : v);
    }
    md << '\n';
    csv << '\n';
  }
  out << md.str();
  if (!output_dir.empty()) {
    open_out(fs::path(output_dir) / "report.md") << md.str();
    open_out(fs::path(output_dir) / "report.csv") << csv.str();
  }
}

}  // namespace midpc::cli
