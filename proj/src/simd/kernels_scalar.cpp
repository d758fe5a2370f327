// SPDX-License-Identifier: Apache-2.0
#include "weightforge/simd/kernels.hpp"

namespace wforge::simd {
namespace {

void gemm_abt(std::size_t m, std::size_t n, std::size_t k, const Scalar* a,
              const Scalar* b, Scalar* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const Scalar* row = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const Scalar* col = b + j * k;
      Scalar acc = 0;
      for (std::size_t p = 0; p < k; ++p) acc += row[p] * col[p];
      c[i * n + j] = acc;
    }
  }
}

void gemm_ab_acc(std::size_t m, std::size_t n, std::size_t k, const Scalar* a,
                 const Scalar* b, Scalar* c) {
  for (std::size_t i = 0; i < m; ++i) {
    Scalar* out = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const Scalar s = a[i * k + p];
      if (s == Scalar(0)) continue;
      const Scalar* src = b + p * n;
      for (std::size_t j = 0; j < n; ++j) out[j] += s * src[j];
    }
  }
}

void gemm_atb_acc(std::size_t m, std::size_t n, std::size_t k, const Scalar* a,
                  const Scalar* b, Scalar* c) {
  for (std::size_t i = 0; i < m; ++i) {
    Scalar* out = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const Scalar s = a[p * m + i];
      if (s == Scalar(0)) continue;
      const Scalar* src = b + p * n;
      for (std::size_t j = 0; j < n; ++j) out[j] += s * src[j];
    }
  }
}

Scalar dot(std::size_t n, const Scalar* x, const Scalar* y) {
  Scalar acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

void axpy(std::size_t n, Scalar alpha, const Scalar* x, Scalar* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace

const KernelTable& scalar_kernels() {
  static const KernelTable table{Isa::kScalar, "scalar", &gemm_abt,
                                 &gemm_ab_acc,  &gemm_atb_acc, &dot, &axpy};
  return table;
}

}  // namespace wforge::simd
