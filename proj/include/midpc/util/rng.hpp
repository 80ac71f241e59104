#pragma once

#include <cstdint>
#include <random>

namespace midpc {

/// splitmix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t mix_seed(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a) {
  return mix_seed(master ^ mix_seed(a + 0x632be59bd9b4e019ULL));
}

constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b) {
  return derive_seed(derive_seed(master, a), b);
}

constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b,
                                    std::uint64_t c) {
  return derive_seed(derive_seed(master, a, b), c);
}

/// Seeded generator with platform-independent variates.
///
/// Only the raw mt19937_64 stream (which the standard pins down exactly) is
/// used; every distribution is implemented here so that datasets and
/// training runs reproduce bit-for-bit across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in the closed range [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// Beta(a, b) via Johnk's rejection algorithm (exact for all a, b > 0).
  double beta(double a, double b);

  /// Gumbel(0, 1): -ln(-ln U) with U clamped away from {0, 1} by 1e-12.
  double gumbel();

  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 engine_;
  bool has_spare_normal_ = false;
  double spare_normal_ = 0.0;
};

}  // namespace midpc
