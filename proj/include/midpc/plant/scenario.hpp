#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "midpc/plant/system.hpp"
#include "midpc/util/rng.hpp"

namespace midpc::plant {

struct DisturbanceConfig {
  double d1_scale = 7.0;
  double d1_alpha = 0.6;
  double d1_beta = 1.4;
  double peak_min = 1.0;
  double peak_max = 16.0;
  int duration_min = 2;
  int duration_max = 5;
  int gap_min = 6;
  int gap_max = 60;

  void validate() const;
};

/// x0 plus an N x n_d disturbance window; flattened row-major this is the
/// control-parameter vector xi = [x0, d_0, ..., d_{N-1}].
struct ScenarioSample {
  Eigen::VectorXd x0;
  Eigen::MatrixXd d;

  Eigen::Index horizon() const { return d.rows(); }
  Eigen::VectorXd xi() const;
};

Eigen::VectorXd sample_initial_state(Rng& rng, const ConstraintSpec& constraints);

/// i.i.d. draws of d1_scale * Beta(d1_alpha, d1_beta).
std::vector<double> sample_disturbance_d1(Rng& rng, std::size_t length,
                                          const DisturbanceConfig& cfg = {});

/// Zero baseline with rectangular peaks of uniform amplitude and integer
/// duration, separated by uniform integer gaps. The phase is randomized by
/// discarding a burn-in prefix.
std::vector<double> sample_disturbance_d2(Rng& rng, std::size_t length,
                                          const DisturbanceConfig& cfg = {});

/// length x 2 disturbance trajectory (columns d1, d2).
Eigen::MatrixXd sample_disturbances(Rng& rng, std::size_t length, const DisturbanceConfig& cfg = {});

ScenarioSample sample_scenario(Rng& rng, const ConstraintSpec& constraints, std::size_t horizon,
                               const DisturbanceConfig& cfg = {});

enum class Split : std::uint64_t { Train = 1, Dev = 2, Test = 3 };
std::string to_string(Split split);

struct Dataset {
  std::size_t horizon = 0;
  std::uint64_t seed = 0;
  Split split = Split::Train;
  std::vector<ScenarioSample> samples;

  std::size_t size() const { return samples.size(); }
};

/// Sample i of a split is drawn from its own stream derive_seed(seed, split, i),
/// so content does not depend on how generation is partitioned.
Dataset generate_split(std::uint64_t seed, Split split, std::size_t count, std::size_t horizon,
                       const ConstraintSpec& constraints, const DisturbanceConfig& cfg);

struct DatasetPair {
  Dataset train;
  Dataset dev;
};

DatasetPair build_dataset(std::uint64_t seed, std::size_t n_train, std::size_t n_dev,
                          std::size_t horizon, const ConstraintSpec& constraints,
                          const DisturbanceConfig& cfg = {});

/// CSV with a '#' metadata line (horizon, seed, split, count) and a column
/// header x1,x2,d1_0,d2_0,...; values are written with 17 significant digits.
void write_dataset_csv(std::ostream& out, const Dataset& data);
Dataset read_dataset_csv(std::istream& in);
void save_dataset(const std::string& path, const Dataset& data);
Dataset load_dataset(const std::string& path);

}  // namespace midpc::plant
