#include "midpc/util/rng.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "midpc/util/errors.hpp"

namespace midpc {

std::int64_t Rng::uniform_int(std::int64_t lo, std::int64_t hi) {
  if (hi < lo) throw ConfigError("uniform_int: empty range");
  const auto span = static_cast<std::uint64_t>(hi - lo) + 1ULL;
  if (span == 0) return static_cast<std::int64_t>(engine_());
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % span;
  std::uint64_t draw = engine_();
  while (draw >= limit) draw = engine_();
  return lo + static_cast<std::int64_t>(draw % span);
}

double Rng::normal() {
  if (has_spare_normal_) {
    has_spare_normal_ = false;
    return spare_normal_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_normal_ = radius * std::sin(angle);
  has_spare_normal_ = true;
  return radius * std::cos(angle);
}

double Rng::beta(double a, double b) {
  if (!(a > 0.0) || !(b > 0.0)) throw ConfigError("beta: shape parameters must be positive");
  for (;;) {
    const double u = uniform();
    const double v = uniform();
    if (u <= 0.0 || v <= 0.0) continue;
    // Work in log space so tiny powers do not underflow to 0/0.
    const double log_x = std::log(u) / a;
    const double log_y = std::log(v) / b;
    const double log_sum = log_x > log_y ? log_x + std::log1p(std::exp(log_y - log_x))
                                         : log_y + std::log1p(std::exp(log_x - log_y));
    if (log_sum <= 0.0) return std::exp(log_x - log_sum);
  }
}

double Rng::gumbel() {
  constexpr double kClamp = 1e-12;
  double u = uniform();
  if (u < kClamp) u = kClamp;
  if (u > 1.0 - kClamp) u = 1.0 - kClamp;
  return -std::log(-std::log(u));
}

}  // namespace midpc
