// SPDX-License-Identifier: Apache-2.0
//
// Dense arithmetic kernels used by every layer. Each kernel exists as a
// portable scalar reference and, where the CPU supports it, an AVX2/FMA
// variant. The variant is chosen once at first use; WEIGHTFORGE_SIMD=scalar
// (or avx2) in the environment pins the choice.
//
// All matrices are row-major and densely packed.
#pragma once

#include <cstddef>
#include <string_view>

#include "weightforge/scalar.hpp"

namespace wforge::simd {

enum class Isa { kScalar, kAvx2 };

struct KernelTable {
  Isa isa;
  std::string_view name;

  // c[m,n] = a[m,k] * b[n,k]^T
  void (*gemm_abt)(std::size_t m, std::size_t n, std::size_t k, const Scalar* a,
                   const Scalar* b, Scalar* c);
  // c[m,n] += a[m,k] * b[k,n]
  void (*gemm_ab_acc)(std::size_t m, std::size_t n, std::size_t k,
                      const Scalar* a, const Scalar* b, Scalar* c);
  // c[m,n] += a[k,m]^T * b[k,n]
  void (*gemm_atb_acc)(std::size_t m, std::size_t n, std::size_t k,
                       const Scalar* a, const Scalar* b, Scalar* c);
  Scalar (*dot)(std::size_t n, const Scalar* x, const Scalar* y);
  // y += alpha * x
  void (*axpy)(std::size_t n, Scalar alpha, const Scalar* x, Scalar* y);
};

const KernelTable& scalar_kernels();

// nullptr when the build or the running CPU lacks AVX2+FMA.
const KernelTable* avx2_kernels();

// The table every layer routes through.
const KernelTable& active();

// Overrides the runtime choice. Requesting an unavailable ISA falls back to
// scalar. Returns the table now active.
const KernelTable& select(Isa isa);

}  // namespace wforge::simd
