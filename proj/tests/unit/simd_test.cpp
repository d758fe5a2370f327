// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "support/fixtures.hpp"
#include "weightforge/nn.hpp"
#include "weightforge/simd/kernels.hpp"

using namespace wforge;
using wforge::testing::random_tensor;

namespace {

void expect_close(const std::vector<Scalar>& a, const std::vector<Scalar>& b, std::size_t k) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    // Summation order differs; error grows with the reduction length.
    EXPECT_NEAR(a[i], b[i], 1e-5 * double(k) + 1e-5 * std::abs(double(a[i]))) << "at " << i;
  }
}

struct Dims {
  std::size_t m, n, k;
};
const Dims kDims[] = {{1, 1, 1}, {3, 5, 7}, {8, 8, 8}, {17, 9, 33}, {4, 31, 15}, {64, 10, 785}};

}  // namespace

class SimdEquivalence : public ::testing::Test {
 protected:
  void SetUp() override {
    if (simd::avx2_kernels() == nullptr) GTEST_SKIP() << "AVX2 not available";
  }
};

TEST_F(SimdEquivalence, GemmAbt) {
  const auto& s = simd::scalar_kernels();
  const auto& v = *simd::avx2_kernels();
  for (const Dims& d : kDims) {
    const Tensor a = random_tensor({d.m, d.k}, 1), b = random_tensor({d.n, d.k}, 2);
    std::vector<Scalar> cs(d.m * d.n), cv(d.m * d.n);
    s.gemm_abt(d.m, d.n, d.k, a.data(), b.data(), cs.data());
    v.gemm_abt(d.m, d.n, d.k, a.data(), b.data(), cv.data());
    expect_close(cs, cv, d.k);
  }
}

TEST_F(SimdEquivalence, GemmAccumulating) {
  const auto& s = simd::scalar_kernels();
  const auto& v = *simd::avx2_kernels();
  for (const Dims& d : kDims) {
    const Tensor a = random_tensor({d.m, d.k}, 3), b = random_tensor({d.k, d.n}, 4);
    const Tensor c0 = random_tensor({d.m, d.n}, 5);
    std::vector<Scalar> cs(c0.values().begin(), c0.values().end()), cv = cs;
    s.gemm_ab_acc(d.m, d.n, d.k, a.data(), b.data(), cs.data());
    v.gemm_ab_acc(d.m, d.n, d.k, a.data(), b.data(), cv.data());
    expect_close(cs, cv, d.k);

    const Tensor at = random_tensor({d.k, d.m}, 6);
    std::vector<Scalar> ds(c0.values().begin(), c0.values().end()), dv = ds;
    s.gemm_atb_acc(d.m, d.n, d.k, at.data(), b.data(), ds.data());
    v.gemm_atb_acc(d.m, d.n, d.k, at.data(), b.data(), dv.data());
    expect_close(ds, dv, d.k);
  }
}

TEST_F(SimdEquivalence, DotAndAxpy) {
  const auto& s = simd::scalar_kernels();
  const auto& v = *simd::avx2_kernels();
  for (std::size_t n : {0u, 1u, 7u, 8u, 9u, 31u, 1000u}) {
    const Tensor x = random_tensor({n + 1}, 7), y = random_tensor({n + 1}, 8);
    EXPECT_NEAR(s.dot(n, x.data(), y.data()), v.dot(n, x.data(), y.data()), 1e-5 * double(n + 1));
    std::vector<Scalar> ys(y.values().begin(), y.values().end()), yv = ys;
    s.axpy(n, Scalar(0.75), x.data(), ys.data());
    v.axpy(n, Scalar(0.75), x.data(), yv.data());
    expect_close(ys, yv, 1);
    EXPECT_EQ(ys.back(), y[n]) << "wrote past n";
  }
}

TEST(SimdDispatch, SelectFallsBackAndRestores) {
  const simd::Isa before = simd::active().isa;
  EXPECT_EQ(simd::select(simd::Isa::kScalar).isa, simd::Isa::kScalar);
  const auto& chosen = simd::select(simd::Isa::kAvx2);
  EXPECT_EQ(chosen.isa, simd::avx2_kernels() ? simd::Isa::kAvx2 : simd::Isa::kScalar);
  simd::select(before);
}

TEST(SimdDispatch, ForwardMatchesAcrossIsas) {
  const auto& w = wforge::testing::synth_world();
  const simd::Isa before = simd::active().isa;
  simd::select(simd::Isa::kScalar);
  const Tensor a = forward_logits(w.fc, w.test.images.slice_rows(0, 50));
  simd::select(simd::Isa::kAvx2);
  const Tensor b = forward_logits(w.fc, w.test.images.slice_rows(0, 50));
  simd::select(before);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-4);
}
