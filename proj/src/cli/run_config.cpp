#include "midpc/cli/run_config.hpp"

#include <fstream>
#include <set>

#include "midpc/util/errors.hpp"

namespace midpc::cli {

using nlohmann::json;

namespace {

json full_profile() {
  const RunConfig d;
  json j = d.to_json();
  return j;
}

// Keys of `j` must be a subset of `allowed`.
void check_keys(const json& j, const std::string& where, const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key())) throw ConfigError(where + ": unknown key '" + it.key() + "'");
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + ": wrong type (" + j.at(key).dump() + ")");
  }
}

}  // namespace

json RunConfig::profile(const std::string& name) {
  json j = full_profile();
  if (name == "full") return j;
  if (name == "ci") {
    j["horizon"] = 5;
    j["data"]["n_train"] = 4000;
    j["data"]["n_dev"] = 1000;
    j["data"]["n_test"] = 1000;
    j["train"]["batch_size"] = 500;
    j["train"]["max_epochs"] = 300;
    j["train"]["patience"] = 30;
    return j;
  }
  if (name == "smoke") {
    j["horizon"] = 5;
    j["data"]["n_train"] = 2000;
    j["data"]["n_dev"] = 500;
    j["data"]["n_test"] = 500;
    j["train"]["batch_size"] = 500;
    j["train"]["max_epochs"] = 30;
    j["train"]["patience"] = 10;
    j["sim"]["n_ic"] = 4;
    j["sim"]["n_sim"] = 100;
    return j;
  }
  throw ConfigError("unknown profile '" + name + "' (expected full, ci or smoke)");
}

json RunConfig::to_json() const {
  json p = policy.to_json();
  p.erase("horizon");
  p.erase("zero_output");
  // Width 0 means "strategy default"; keep it that way so a strategy override
  // picks the right width.
  p["width"] = policy.width;
  return {{"benchmark", benchmark},
          {"horizon", horizon},
          {"policy", p},
          {"data",
           {{"seed", data.seed}, {"n_train", data.n_train}, {"n_dev", data.n_dev}, {"n_test", data.n_test}}},
          {"train",
           {{"learning_rate", train.learning_rate},
            {"batch_size", train.batch_size},
            {"max_epochs", train.max_epochs},
            {"patience", train.patience},
            {"min_improvement", train.min_improvement},
            {"shard_size", train.shard_size},
            {"dev_chunk", train.dev_chunk},
            {"grad_clip", train.grad_clip},
            {"seed", train.seed}}},
          {"disturbance",
           {{"d1_scale", disturbance.d1_scale},
            {"d1_alpha", disturbance.d1_alpha},
            {"d1_beta", disturbance.d1_beta},
            {"peak_min", disturbance.peak_min},
            {"peak_max", disturbance.peak_max},
            {"duration_min", disturbance.duration_min},
            {"duration_max", disturbance.duration_max},
            {"gap_min", disturbance.gap_min},
            {"gap_max", disturbance.gap_max}}},
          {"sim",
           {{"seed", sim.seed},
            {"n_ic", sim.n_ic},
            {"n_sim", sim.n_sim},
            {"shared_disturbance", sim.shared_disturbance},
            {"oracle_soft_state", sim.oracle_soft_state},
            {"node_limit", sim.node_limit},
            {"trajectories", sim.trajectories},
            {"plots", sim.plots}}},
          {"workers", workers},
          {"deterministic", deterministic},
          {"output_dir", output_dir}};
}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig c;
  check_keys(j, "config",
             {"benchmark", "horizon", "policy", "data", "train", "disturbance", "sim", "workers",
              "deterministic", "output_dir"});
  read(j, "benchmark", c.benchmark, "config");
  read(j, "horizon", c.horizon, "config");
  read(j, "workers", c.workers, "config");
  read(j, "deterministic", c.deterministic, "config");
  read(j, "output_dir", c.output_dir, "config");

  if (j.contains("policy")) {
    json p = j["policy"];
    check_keys(p, "policy",
               {"strategy", "width", "u_hidden_layers", "delta_hidden_layers", "dropout", "norm", "seed",
                "eta", "rounding_threshold", "clip", "tau", "gumbel_noise", "lt_eta", "lt_correction"});
    if (!p.contains("strategy")) p["strategy"] = rounding::to_string(c.policy.strategy);
    p["horizon"] = c.horizon;
    try {
      c.policy = policy::PolicyConfig::from_json(p);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  if (j.contains("data")) {
    const auto& d = j["data"];
    check_keys(d, "data", {"seed", "n_train", "n_dev", "n_test"});
    read(d, "seed", c.data.seed, "data");
    read(d, "n_train", c.data.n_train, "data");
    read(d, "n_dev", c.data.n_dev, "data");
    read(d, "n_test", c.data.n_test, "data");
  }
  if (j.contains("train")) {
    const auto& t = j["train"];
    check_keys(t, "train",
               {"learning_rate", "batch_size", "max_epochs", "patience", "min_improvement", "shard_size",
                "dev_chunk", "grad_clip", "seed"});
    read(t, "learning_rate", c.train.learning_rate, "train");
    read(t, "batch_size", c.train.batch_size, "train");
    read(t, "max_epochs", c.train.max_epochs, "train");
    read(t, "patience", c.train.patience, "train");
    read(t, "min_improvement", c.train.min_improvement, "train");
    read(t, "shard_size", c.train.shard_size, "train");
    read(t, "dev_chunk", c.train.dev_chunk, "train");
    read(t, "grad_clip", c.train.grad_clip, "train");
    read(t, "seed", c.train.seed, "train");
  }
  if (j.contains("disturbance")) {
    const auto& d = j["disturbance"];
    check_keys(d, "disturbance",
               {"d1_scale", "d1_alpha", "d1_beta", "peak_min", "peak_max", "duration_min", "duration_max",
                "gap_min", "gap_max"});
    auto& o = c.disturbance;
    read(d, "d1_scale", o.d1_scale, "disturbance");
    read(d, "d1_alpha", o.d1_alpha, "disturbance");
    read(d, "d1_beta", o.d1_beta, "disturbance");
    read(d, "peak_min", o.peak_min, "disturbance");
    read(d, "peak_max", o.peak_max, "disturbance");
    read(d, "duration_min", o.duration_min, "disturbance");
    read(d, "duration_max", o.duration_max, "disturbance");
    read(d, "gap_min", o.gap_min, "disturbance");
    read(d, "gap_max", o.gap_max, "disturbance");
  }
  if (j.contains("sim")) {
    const auto& s = j["sim"];
    check_keys(s, "sim",
               {"seed", "n_ic", "n_sim", "shared_disturbance", "oracle_soft_state", "node_limit",
                "trajectories", "plots"});
    read(s, "seed", c.sim.seed, "sim");
    read(s, "n_ic", c.sim.n_ic, "sim");
    read(s, "n_sim", c.sim.n_sim, "sim");
    read(s, "shared_disturbance", c.sim.shared_disturbance, "sim");
    read(s, "oracle_soft_state", c.sim.oracle_soft_state, "sim");
    read(s, "node_limit", c.sim.node_limit, "sim");
    read(s, "trajectories", c.sim.trajectories, "sim");
    read(s, "plots", c.sim.plots, "sim");
  }
  c.policy.horizon = c.horizon;
  return c;
}

void RunConfig::validate() const {
  if (benchmark != "thermal_storage")
    throw ConfigError("benchmark: unknown '" + benchmark + "' (only thermal_storage is available)");
  if (horizon < 1) throw ConfigError("horizon must be at least 1");
  const auto bench = make_benchmark();
  policy_config().validate(policy::PolicyDims::from(bench));
  if (data.n_train == 0 || data.n_dev == 0) throw ConfigError("data: n_train and n_dev must be positive");
  train_config().validate();
  disturbance.validate();
  if (sim.n_ic == 0 || sim.n_sim == 0) throw ConfigError("sim: n_ic and n_sim must be positive");
  if (sim.node_limit < 3) throw ConfigError("sim: node_limit must be at least 3");
  if (workers == 0) throw ConfigError("workers must be positive");
  if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
}

plant::Benchmark RunConfig::make_benchmark() const { return plant::make_thermal_benchmark(); }

policy::PolicyConfig RunConfig::policy_config() const {
  auto p = policy;
  p.horizon = horizon;
  return p;
}

trainer::TrainConfig RunConfig::train_config() const {
  auto t = train;
  t.workers = effective_workers();
  return t;
}

void merge_into(json& base, const json& patch) {
  if (!base.is_object() || !patch.is_object()) {
    base = patch;
    return;
  }
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    if (base.contains(it.key()))
      merge_into(base[it.key()], it.value());
    else
      base[it.key()] = it.value();
  }
}

void apply_override(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("--set expects key=value, got '" + assignment + "'");
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json* node = &j;
  std::size_t start = 0;
  for (;;) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!node->is_object() || !node->contains(key))
      throw ConfigError("--set: unknown config key '" + path + "'");
    node = &(*node)[key];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  *node = value;
}

RunConfig resolve_config(const std::string& profile, const std::string& file,
                         const std::vector<std::string>& overrides) {
  json j = RunConfig::profile(profile);
  if (!file.empty()) {
    std::ifstream in(file);
    if (!in) throw ConfigError("cannot open config file " + file);
    json user = json::parse(in, nullptr, false);
    if (user.is_discarded()) throw ConfigError("config file " + file + " is not valid JSON");
    merge_into(j, user);
  }
  for (const auto& o : overrides) apply_override(j, o);
  RunConfig c = RunConfig::from_json(j);
  c.validate();
  return c;
}

}  // namespace midpc::cli
