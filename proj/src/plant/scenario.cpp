#include "midpc/plant/scenario.hpp"

#include <fstream>
#include <sstream>

#include "midpc/util/errors.hpp"
#include "midpc/util/format.hpp"

namespace midpc::plant {

void DisturbanceConfig::validate() const {
  if (!(d1_scale > 0.0 && d1_alpha > 0.0 && d1_beta > 0.0))
    throw ConfigError("disturbance: d1 scale and shape parameters must be positive");
  if (!(peak_min > 0.0 && peak_min <= peak_max))
    throw ConfigError("disturbance: need 0 < peak_min <= peak_max");
  if (duration_min < 1 || duration_min > duration_max)
    throw ConfigError("disturbance: need 1 <= duration_min <= duration_max");
  if (gap_min < 1 || gap_min > gap_max) throw ConfigError("disturbance: need 1 <= gap_min <= gap_max");
}

Eigen::VectorXd ScenarioSample::xi() const {
  Eigen::VectorXd out(x0.size() + d.size());
  out.head(x0.size()) = x0;
  Eigen::Index k = x0.size();
  for (Eigen::Index i = 0; i < d.rows(); ++i)
    for (Eigen::Index j = 0; j < d.cols(); ++j) out(k++) = d(i, j);
  return out;
}

Eigen::VectorXd sample_initial_state(Rng& rng, const ConstraintSpec& constraints) {
  Eigen::VectorXd x(constraints.x_min.size());
  for (Eigen::Index i = 0; i < x.size(); ++i)
    x(i) = rng.uniform(constraints.x_min(i), constraints.x_max(i));
  return x;
}

std::vector<double> sample_disturbance_d1(Rng& rng, std::size_t length,
                                          const DisturbanceConfig& cfg) {
  std::vector<double> out(length);
  for (double& v : out) v = cfg.d1_scale * rng.beta(cfg.d1_alpha, cfg.d1_beta);
  return out;
}

std::vector<double> sample_disturbance_d2(Rng& rng, std::size_t length,
                                          const DisturbanceConfig& cfg) {
  const std::size_t burn = static_cast<std::size_t>(cfg.gap_max + cfg.duration_max);
  std::vector<double> signal;
  signal.reserve(length + burn + static_cast<std::size_t>(cfg.gap_max + cfg.duration_max));
  while (signal.size() < length + burn) {
    const auto gap = rng.uniform_int(cfg.gap_min, cfg.gap_max);
    signal.insert(signal.end(), static_cast<std::size_t>(gap), 0.0);
    const auto duration = rng.uniform_int(cfg.duration_min, cfg.duration_max);
    const double amplitude = rng.uniform(cfg.peak_min, cfg.peak_max);
    signal.insert(signal.end(), static_cast<std::size_t>(duration), amplitude);
  }
  const auto first = signal.begin() + static_cast<std::ptrdiff_t>(burn);
  return {first, first + static_cast<std::ptrdiff_t>(length)};
}

Eigen::MatrixXd sample_disturbances(Rng& rng, std::size_t length, const DisturbanceConfig& cfg) {
  const auto d1 = sample_disturbance_d1(rng, length, cfg);
  const auto d2 = sample_disturbance_d2(rng, length, cfg);
  Eigen::MatrixXd d(static_cast<Eigen::Index>(length), 2);
  for (std::size_t k = 0; k < length; ++k) {
    d(static_cast<Eigen::Index>(k), 0) = d1[k];
    d(static_cast<Eigen::Index>(k), 1) = d2[k];
  }
  return d;
}

ScenarioSample sample_scenario(Rng& rng, const ConstraintSpec& constraints, std::size_t horizon,
                               const DisturbanceConfig& cfg) {
  if (horizon == 0) throw ConfigError("scenario horizon must be at least 1");
  ScenarioSample s;
  s.x0 = sample_initial_state(rng, constraints);
  s.d = sample_disturbances(rng, horizon, cfg);
  return s;
}

std::string to_string(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Dev: return "dev";
    case Split::Test: return "test";
  }
  return "unknown";
}

Dataset generate_split(std::uint64_t seed, Split split, std::size_t count, std::size_t horizon,
                       const ConstraintSpec& constraints, const DisturbanceConfig& cfg) {
  if (count == 0) throw ConfigError("dataset split '" + to_string(split) + "' must be nonempty");
  cfg.validate();
  Dataset data;
  data.horizon = horizon;
  data.seed = seed;
  data.split = split;
  data.samples.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(split), i));
    data.samples.push_back(sample_scenario(rng, constraints, horizon, cfg));
  }
  return data;
}

DatasetPair build_dataset(std::uint64_t seed, std::size_t n_train, std::size_t n_dev,
                          std::size_t horizon, const ConstraintSpec& constraints,
                          const DisturbanceConfig& cfg) {
  return {generate_split(seed, Split::Train, n_train, horizon, constraints, cfg),
          generate_split(seed, Split::Dev, n_dev, horizon, constraints, cfg)};
}

void write_dataset_csv(std::ostream& out, const Dataset& data) {
  out << "# midpc-dataset horizon=" << data.horizon << " seed=" << data.seed
      << " split=" << to_string(data.split) << " count=" << data.size() << '\n';
  out << "x1,x2";
  for (std::size_t k = 0; k < data.horizon; ++k) out << ",d1_" << k << ",d2_" << k;
  out << '\n';
  for (const auto& s : data.samples) {
    const auto xi = s.xi();
    for (Eigen::Index i = 0; i < xi.size(); ++i) {
      if (i) out << ',';
      out << format_double(xi(i));
    }
    out << '\n';
  }
}

namespace {

std::string header_field(const std::string& line, const std::string& key) {
  const auto pos = line.find(" " + key + "=");
  if (pos == std::string::npos) throw ConfigError("dataset header lacks '" + key + "'");
  const auto start = pos + key.size() + 2;
  return line.substr(start, line.find(' ', start) - start);
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "dev") return Split::Dev;
  if (s == "test") return Split::Test;
  throw ConfigError("dataset header: unknown split '" + s + "'");
}

}  // namespace

Dataset read_dataset_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("# midpc-dataset", 0) != 0)
    throw ConfigError("dataset: missing '# midpc-dataset' header line");
  Dataset data;
  data.horizon = std::stoul(header_field(line, "horizon"));
  data.seed = std::stoull(header_field(line, "seed"));
  data.split = parse_split(header_field(line, "split"));
  const std::size_t count = std::stoul(header_field(line, "count"));
  std::getline(in, line);  // column names

  const std::size_t width = 2 + 2 * data.horizon;
  data.samples.reserve(count);
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++row;
    std::vector<double> values;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) values.push_back(std::stod(cell));
    if (values.size() != width)
      throw ShapeError("dataset row " + std::to_string(row) + " has " +
                       std::to_string(values.size()) + " fields, expected " + std::to_string(width));
    ScenarioSample s;
    s.x0 = Eigen::Vector2d(values[0], values[1]);
    s.d.resize(static_cast<Eigen::Index>(data.horizon), 2);
    for (std::size_t k = 0; k < data.horizon; ++k) {
      s.d(static_cast<Eigen::Index>(k), 0) = values[2 + 2 * k];
      s.d(static_cast<Eigen::Index>(k), 1) = values[3 + 2 * k];
    }
    data.samples.push_back(std::move(s));
  }
  if (data.samples.size() != count)
    throw ConfigError("dataset: header promises " + std::to_string(count) + " rows, found " +
                      std::to_string(data.samples.size()));
  return data;
}

void save_dataset(const std::string& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  write_dataset_csv(out, data);
  if (!out) throw IoError("write failed for '" + path + "'");
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read '" + path + "'");
  return read_dataset_csv(in);
}

}  // namespace midpc::plant
