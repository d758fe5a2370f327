// SPDX-License-Identifier: Apache-2.0
#include <atomic>
#include <cstdlib>
#include <string_view>

#include "weightforge/simd/kernels.hpp"

namespace wforge::simd {

const KernelTable* avx2_kernels_unchecked();

namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable* initial_choice() {
  const KernelTable* avx2 = avx2_kernels();
  if (const char* env = std::getenv("WEIGHTFORGE_SIMD")) {
    const std::string_view want(env);
    if (want == "scalar") return &scalar_kernels();
    if (want == "avx2" && avx2 != nullptr) return avx2;
  }
  return avx2 != nullptr ? avx2 : &scalar_kernels();
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table{initial_choice()};
  return table;
}

}  // namespace

const KernelTable* avx2_kernels() {
  static const KernelTable* table =
      cpu_has_avx2() ? avx2_kernels_unchecked() : nullptr;
  return table;
}

const KernelTable& active() { return *current().load(std::memory_order_relaxed); }

const KernelTable& select(Isa isa) {
  const KernelTable* table = &scalar_kernels();
  if (isa == Isa::kAvx2 && avx2_kernels() != nullptr) table = avx2_kernels();
  current().store(table, std::memory_order_relaxed);
  return *table;
}

}  // namespace wforge::simd
