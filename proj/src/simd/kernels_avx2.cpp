// SPDX-License-Identifier: Apache-2.0
//
// AVX2/FMA kernels. This translation unit is compiled with -mavx2 -mfma and
// must only be entered after a runtime CPU check (see dispatch.cpp).
#include "weightforge/simd/kernels.hpp"

#if defined(WEIGHTFORGE_HAVE_AVX2) && !defined(WEIGHTFORGE_USE_DOUBLE)

#include <immintrin.h>

namespace wforge::simd {
namespace {

inline float hsum(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  __m128 shuf = _mm_movehdup_ps(lo);
  __m128 sums = _mm_add_ps(lo, shuf);
  shuf = _mm_movehl_ps(shuf, sums);
  sums = _mm_add_ss(sums, shuf);
  return _mm_cvtss_f32(sums);
}

float dot(std::size_t n, const float* x, const float* y) {
  __m256 acc0 = _mm256_setzero_ps();
  __m256 acc1 = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i), acc0);
    acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(x + i + 8),
                           _mm256_loadu_ps(y + i + 8), acc1);
  }
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i), acc0);
  }
  float acc = hsum(_mm256_add_ps(acc0, acc1));
  for (; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

void axpy(std::size_t n, float alpha, const float* x, float* y) {
  const __m256 a = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(a, _mm256_loadu_ps(x + i),
                                            _mm256_loadu_ps(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

// Four output columns share each load of the left-hand row.
void gemm_abt(std::size_t m, std::size_t n, std::size_t k, const float* a,
              const float* b, float* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const float* row = a + i * k;
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
      const float* b0 = b + j * k;
      const float* b1 = b0 + k;
      const float* b2 = b1 + k;
      const float* b3 = b2 + k;
      __m256 acc0 = _mm256_setzero_ps();
      __m256 acc1 = _mm256_setzero_ps();
      __m256 acc2 = _mm256_setzero_ps();
      __m256 acc3 = _mm256_setzero_ps();
      std::size_t p = 0;
      for (; p + 8 <= k; p += 8) {
        const __m256 r = _mm256_loadu_ps(row + p);
        acc0 = _mm256_fmadd_ps(r, _mm256_loadu_ps(b0 + p), acc0);
        acc1 = _mm256_fmadd_ps(r, _mm256_loadu_ps(b1 + p), acc1);
        acc2 = _mm256_fmadd_ps(r, _mm256_loadu_ps(b2 + p), acc2);
        acc3 = _mm256_fmadd_ps(r, _mm256_loadu_ps(b3 + p), acc3);
      }
      float s0 = hsum(acc0), s1 = hsum(acc1), s2 = hsum(acc2), s3 = hsum(acc3);
      for (; p < k; ++p) {
        const float r = row[p];
        s0 += r * b0[p];
        s1 += r * b1[p];
        s2 += r * b2[p];
        s3 += r * b3[p];
      }
      float* out = c + i * n + j;
      out[0] = s0;
      out[1] = s1;
      out[2] = s2;
      out[3] = s3;
    }
    for (; j < n; ++j) c[i * n + j] = dot(k, row, b + j * k);
  }
}

void gemm_ab_acc(std::size_t m, std::size_t n, std::size_t k, const float* a,
                 const float* b, float* c) {
  for (std::size_t i = 0; i < m; ++i) {
    float* out = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const float s = a[i * k + p];
      if (s == 0.0f) continue;
      axpy(n, s, b + p * n, out);
    }
  }
}

void gemm_atb_acc(std::size_t m, std::size_t n, std::size_t k, const float* a,
                  const float* b, float* c) {
  for (std::size_t i = 0; i < m; ++i) {
    float* out = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const float s = a[p * m + i];
      if (s == 0.0f) continue;
      axpy(n, s, b + p * n, out);
    }
  }
}

}  // namespace

const KernelTable* avx2_kernels_unchecked() {
  static const KernelTable table{Isa::kAvx2,   "avx2", &gemm_abt, &gemm_ab_acc,
                                 &gemm_atb_acc, &dot,   &axpy};
  return &table;
}

}  // namespace wforge::simd

#else

namespace wforge::simd {
const KernelTable* avx2_kernels_unchecked() { return nullptr; }
}  // namespace wforge::simd

#endif
