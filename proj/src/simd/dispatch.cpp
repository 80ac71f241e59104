#include <atomic>
#include <cstdlib>
#include <string>

#include "midpc/simd/kernels.hpp"
#include "midpc/util/errors.hpp"

namespace midpc::simd {

#if !defined(MIDPC_HAVE_AVX2)
const KernelTable* avx2_kernels() { return nullptr; }
#endif

namespace {

Level initial_level() {
  Level level = detected_level();
  if (const char* env = std::getenv("MIDPC_SIMD")) {
    const std::string value(env);
    if (value == "scalar") level = Level::Scalar;
    if (value == "avx2" && cpu_supports(Level::Avx2)) level = Level::Avx2;
  }
  return level;
}

std::atomic<const KernelTable*>& active_table() {
  static std::atomic<const KernelTable*> table{&kernels(initial_level())};
  return table;
}

}  // namespace

std::string_view to_string(Level level) {
  switch (level) {
    case Level::Scalar:
      return "scalar";
    case Level::Avx2:
      return "avx2";
  }
  return "unknown";
}

bool cpu_supports(Level level) {
  if (level == Level::Scalar) return true;
#if defined(__x86_64__) || defined(__i386__)
  if (avx2_kernels() == nullptr) return false;
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Level detected_level() { return cpu_supports(Level::Avx2) ? Level::Avx2 : Level::Scalar; }

const KernelTable& kernels(Level level) {
  if (level == Level::Avx2 && cpu_supports(Level::Avx2)) return *avx2_kernels();
  if (level == Level::Avx2) throw ConfigError("AVX2 kernels are not available on this machine");
  return scalar_kernels();
}

Level active_level() {
  return active_table().load() == &scalar_kernels() ? Level::Scalar : Level::Avx2;
}

void set_level(Level level) { active_table().store(&kernels(level)); }

const KernelTable& active() { return *active_table().load(std::memory_order_relaxed); }

}  // namespace midpc::simd
