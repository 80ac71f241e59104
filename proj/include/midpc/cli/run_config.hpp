#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "midpc/plant/scenario.hpp"
#include "midpc/plant/system.hpp"
#include "midpc/policy/policy.hpp"
#include "midpc/trainer/trainer.hpp"

namespace midpc::cli {

struct DataConfig {
  std::uint64_t seed = 1;
  std::size_t n_train = 24000;
  std::size_t n_dev = 4000;
  std::size_t n_test = 4000;
};

struct SimConfig {
  std::uint64_t seed = 4;
  std::size_t n_ic = 20;
  std::size_t n_sim = 400;
  bool shared_disturbance = true;
  bool oracle_soft_state = true;
  std::size_t node_limit = 1000000;
  bool trajectories = true;
  bool plots = false;
};

/// Everything one command needs. Built from a profile, then a JSON file, then
/// `key.path=value` overrides; the resolved form is echoed next to the outputs.
struct RunConfig {
  std::string benchmark = "thermal_storage";
  std::size_t horizon = 10;
  policy::PolicyConfig policy;
  DataConfig data;
  trainer::TrainConfig train;
  plant::DisturbanceConfig disturbance;
  SimConfig sim;
  std::size_t workers = 1;
  bool deterministic = false;
  std::string output_dir = "run";

  RunConfig() {
    policy.seed = 2;
    train.seed = 3;
  }

  /// Profiles: "full" (the reference recipe), "ci" and "smoke".
  static nlohmann::json profile(const std::string& name);
  /// Unknown keys and wrong types are ConfigErrors.
  static RunConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;

  /// Throws ConfigError on the first invalid field.
  void validate() const;
  plant::Benchmark make_benchmark() const;
  policy::PolicyConfig policy_config() const;
  trainer::TrainConfig train_config() const;
  std::size_t effective_workers() const { return deterministic ? 1 : workers; }
};

/// Deep merge of `patch` into `base` (objects merge, everything else replaces).
void merge_into(nlohmann::json& base, const nlohmann::json& patch);

/// Applies "a.b.c=value"; value is parsed as JSON when possible, else taken as
/// a string. The path must already exist in `j`.
void apply_override(nlohmann::json& j, const std::string& assignment);

/// profile -> file (optional) -> overrides.
RunConfig resolve_config(const std::string& profile, const std::string& file,
                         const std::vector<std::string>& overrides);

}  // namespace midpc::cli
