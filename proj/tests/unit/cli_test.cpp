#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "midpc/cli/commands.hpp"
#include "midpc/util/errors.hpp"

namespace midpc::cli {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("midpc_cli_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// A run small enough for a unit test.
RunConfig tiny(const fs::path& out, std::vector<std::string> extra = {}) {
  std::vector<std::string> o{"horizon=3",          "data.n_train=200",    "data.n_dev=100",
                             "data.n_test=50",     "train.batch_size=100", "train.max_epochs=3",
                             "train.patience=2",   "sim.n_ic=2",          "sim.n_sim=15",
                             "policy.width=16",    "output_dir=\"" + out.string() + "\""};
  o.insert(o.end(), extra.begin(), extra.end());
  return resolve_config("smoke", "", o);
}

TEST(Config, ProfilesResolve) {
  const auto full = resolve_config("full", "", {});
  EXPECT_EQ(full.horizon, 10u);
  EXPECT_EQ(full.data.n_train, 24000u);
  EXPECT_EQ(full.data.n_dev, 4000u);
  EXPECT_EQ(full.train.batch_size, 2000u);
  EXPECT_EQ(full.train.patience, 80u);
  EXPECT_DOUBLE_EQ(full.train.learning_rate, 3e-4);
  EXPECT_DOUBLE_EQ(full.policy.sigmoid.eta, 10.0);
  const auto ci = resolve_config("ci", "", {});
  EXPECT_EQ(ci.horizon, 5u);
  EXPECT_EQ(ci.data.n_train, 4000u);
  EXPECT_EQ(ci.policy_config().horizon, 5u);
  EXPECT_THROW(resolve_config("huge", "", {}), ConfigError);
}

TEST(Config, OverridesAndValidation) {
  const auto c = resolve_config("full", "",
                                {"policy.strategy=softmax_ste", "train.learning_rate=0.001", "sim.plots=true"});
  EXPECT_EQ(c.policy.strategy, rounding::Strategy::SoftmaxSte);
  EXPECT_DOUBLE_EQ(c.train.learning_rate, 1e-3);
  EXPECT_TRUE(c.sim.plots);
  EXPECT_THROW(resolve_config("full", "", {"train.learning_rat=1"}), ConfigError);
  EXPECT_THROW(resolve_config("full", "", {"novalue"}), ConfigError);
  EXPECT_THROW(resolve_config("full", "", {"train.batch_size=\"many\""}), ConfigError);
  EXPECT_THROW(resolve_config("full", "", {"train.patience=5000"}), ConfigError);
  EXPECT_THROW(resolve_config("full", "", {"horizon=0"}), ConfigError);
  EXPECT_THROW(resolve_config("full", "", {"policy.strategy=\"coin_flip\""}), ConfigError);
  EXPECT_THROW(resolve_config("full", "", {"benchmark=\"other\""}), ConfigError);
}

TEST(Config, FileMergesAndRoundTrips) {
  const auto dir = scratch("file");
  fs::create_directories(dir);
  {
    std::ofstream f(dir / "cfg.json");
    f << R"({"horizon": 7, "train": {"max_epochs": 200}})";
  }
  const auto c = resolve_config("full", (dir / "cfg.json").string(), {"train.max_epochs=150"});
  EXPECT_EQ(c.horizon, 7u);
  EXPECT_EQ(c.train.max_epochs, 150u);
  EXPECT_EQ(c.train.patience, 80u);
  const auto again = RunConfig::from_json(c.to_json());
  EXPECT_EQ(again.to_json(), c.to_json());
  {
    std::ofstream f(dir / "bad.json");
    f << R"({"horizon": 7, "extra": 1})";
  }
  EXPECT_THROW(resolve_config("full", (dir / "bad.json").string(), {}), ConfigError);
  EXPECT_THROW(resolve_config("full", (dir / "missing.json").string(), {}), ConfigError);
}

TEST(Commands, DatagenIsDeterministic) {
  const auto a = scratch("gen_a"), b = scratch("gen_b");
  cmd_datagen(tiny(a), nullptr);
  cmd_datagen(tiny(b), nullptr);
  for (const char* f : {"train.csv", "dev.csv", "test.csv", "initial_states.csv", "test_disturbances.csv"}) {
    ASSERT_TRUE(fs::exists(a / f)) << f;
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
  const auto train = plant::load_dataset((a / "train.csv").string());
  EXPECT_EQ(train.size(), 200u);
  EXPECT_EQ(train.samples[0].xi().size(), 2 + 2 * 3);
  EXPECT_TRUE(fs::exists(a / "config.json"));
  EXPECT_EQ(RunConfig::from_json(nlohmann::json::parse(slurp(a / "config.json"))).to_json(),
            tiny(a).to_json());
}

TEST(Commands, TrainRefusesHorizonMismatch) {
  const auto data = scratch("gen_n3");
  cmd_datagen(tiny(data), nullptr);
  const auto out = scratch("train_n4");
  EXPECT_THROW(cmd_train(tiny(out, {"horizon=4"}), data.string(), nullptr), ConfigError);
  EXPECT_FALSE(fs::exists(out / "policy.json"));
}

TEST(Commands, TrainWritesReloadableCheckpoint) {
  const auto data = scratch("gen_train");
  cmd_datagen(tiny(data), nullptr);
  const auto out = scratch("train");
  const auto cfg = tiny(out);
  const auto trained = cmd_train(cfg, data.string(), nullptr);
  for (const char* f : {"policy.json", "history.csv", "train_summary.json", "config.json"})
    EXPECT_TRUE(fs::exists(out / f)) << f;
  EXPECT_EQ(trained.result.history.size(), 3u);

  const auto reloaded = load_policy(cfg, (out / "policy.json").string());
  const auto bench = cfg.make_benchmark();
  const auto dev = load_or_generate(cfg, data.string()).dev;
  EXPECT_EQ(trainer::evaluate_loss(trained.policy, bench, dev).total,
            trainer::evaluate_loss(reloaded, bench, dev).total);
  for (const auto& s : dev.samples) {
    const auto xi = s.xi();
    const std::vector<double> v(xi.data(), xi.data() + xi.size());
    const auto a = trained.policy.act(v), b = reloaded.act(v);
    EXPECT_EQ(a.u, b.u);
    EXPECT_EQ(a.delta, b.delta);
  }
  EXPECT_THROW(load_policy(tiny(out, {"horizon=4"}), (out / "policy.json").string()), ConfigError);

  // Softmax strategy selects the 4-way head.
  const auto sm = cmd_train(tiny(scratch("train_sm"), {"policy.strategy=\"softmax_ste\""}), data.string(), nullptr);
  std::size_t head = 0;
  for (const auto& b : sm.policy.parameter_breakdown())
    if (b.component == "delta_head") head = b.count;
  std::size_t sig_head = 0;
  for (const auto& b : trained.policy.parameter_breakdown())
    if (b.component == "delta_head") sig_head = b.count;
  EXPECT_EQ(head - sig_head, 3u * 17u);
}

TEST(Commands, CompareOracleWithItselfGivesZeroRsm) {
  const auto out = scratch("self");
  const auto c = cmd_compare(tiny(out), "oracle", nullptr);
  ASSERT_TRUE(c.policy.rsm.has_value());
  EXPECT_EQ(*c.policy.rsm, 0.0);
  const auto summary = nlohmann::json::parse(slurp(out / "summary.json"));
  EXPECT_EQ(summary["policy"]["rsm_percent"], "0.00");
  EXPECT_TRUE(fs::exists(out / "oracle_soft_N3_diagnostics.csv"));
  EXPECT_TRUE(fs::exists(out / "trajectories" / "oracle_soft_N3_ic1.csv"));

  std::ostringstream table;
  cmd_report({out.string()}, out.string(), table);
  EXPECT_NE(table.str().find("| RSM (%) | 0.00 | - |"), std::string::npos) << table.str();
  EXPECT_TRUE(fs::exists(out / "report.csv"));
  EXPECT_THROW(cmd_report({(out / "nothing").string()}, "", table), IoError);
}

TEST(Commands, CompareIsReproducible) {
  const auto data = scratch("gen_rep");
  cmd_datagen(tiny(data), nullptr);
  const auto model = scratch("rep_model");
  cmd_train(tiny(model), data.string(), nullptr);
  const auto a = scratch("rep_a"), b = scratch("rep_b");
  const auto ca = cmd_compare(tiny(a), (model / "policy.json").string(), nullptr);
  const auto cb = cmd_compare(tiny(b), (model / "policy.json").string(), nullptr);
  EXPECT_EQ(ca.policy.l_mean, cb.policy.l_mean);
  EXPECT_EQ(ca.oracle.l_mean, cb.oracle.l_mean);
  EXPECT_EQ(slurp(a / "errors.csv"), slurp(b / "errors.csv"));
  EXPECT_EQ(ca.policy.rsm, cb.policy.rsm);
  EXPECT_TRUE(ca.policy.ntp.has_value());
}

TEST(Commands, SimulateControllers) {
  const auto out = scratch("sim");
  const auto zero = cmd_simulate(tiny(out, {"sim.plots=true"}), "zero", "", nullptr);
  EXPECT_EQ(zero.controller, "zero");
  EXPECT_GT(zero.l_mean, 0.0);
  EXPECT_TRUE(fs::exists(out / "plots" / "zero_phase.svg"));
  EXPECT_TRUE(fs::exists(out / "metrics.csv"));
  EXPECT_THROW(cmd_simulate(tiny(out), "policy", "", nullptr), ConfigError);
  EXPECT_THROW(cmd_simulate(tiny(out), "magic", "", nullptr), ConfigError);
}

}  // namespace
}  // namespace midpc::cli
