// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "support/fixtures.hpp"
#include "weightforge/error.hpp"
#include "weightforge/hessian.hpp"
#include "weightforge/nn.hpp"
#include "weightforge/pruning.hpp"

using namespace wforge;

TEST(PruneOrder, MatchesSortOracle) {
  Rng rng(3);
  std::uniform_int_distribution<int> v(0, 5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> mags(1 + trial % 17);
    for (double& m : mags) m = 0.5 * v(rng);  // plenty of ties
    std::vector<std::size_t> want(mags.size());
    std::iota(want.begin(), want.end(), 0);
    std::stable_sort(want.begin(), want.end(), [&](auto a, auto b) { return mags[a] < mags[b]; });
    EXPECT_EQ(prune_order(mags), want);
  }
}

TEST(Pruning, BudgetAndApply) {
  const auto& w = wforge::testing::synth_world();
  Model cnn = build_cnn({28, 28, 1}, 4, 2);
  TrainConfig tc;
  tc.epochs = 1;
  tc.lr = 0.01;
  train(cnn, w.train.slice(0, 200), tc);
  const Dataset eval = w.test.slice(0, 200);
  const auto none = plan_magnitude_pruning(cnn, 1, eval, 0.0);
  EXPECT_TRUE(none.pruned.empty());
  const auto plan = plan_magnitude_pruning(cnn, 1, eval, 0.05);
  EXPECT_EQ(plan.order, prune_order(channel_activation_magnitudes(cnn, 1, eval.images)));
  EXPECT_TRUE(std::equal(plan.pruned.begin(), plan.pruned.end(), plan.order.begin()));
  for (std::size_t j = 1; j + 1 < plan.accuracy.size() && j <= plan.pruned.size(); ++j) {
    EXPECT_LT(plan.base_accuracy - plan.accuracy[j], 0.05 + 1e-12);
  }
  Model p = cnn;
  apply_pruning(p, 1, {0, 5});
  const Layer& l = p.layer(1);
  const std::size_t per = l.weights.size() / l.weights.dim(0);
  for (std::size_t c : {0u, 5u}) {
    EXPECT_EQ(l.bias[c], 0);
    for (std::size_t i = 0; i < per; ++i) EXPECT_EQ(l.weights[c * per + i], 0);
  }
}

TEST(Hessian, FiniteDifferenceHvpOnQuadratic) {
  // f = 0.5 x^T A x with A = [[3,1],[1,2]]: Hv = Av exactly.
  const GradientFn g = [](std::span<const double> t) {
    return std::vector<double>{3 * t[0] + t[1], t[0] + 2 * t[1]};
  };
  const std::vector<double> theta{0.3, -2}, v{1, 0.5};
  const auto hv = hessian_vector_product(g, theta, v);
  EXPECT_NEAR(hv[0], 3.5, 1e-9);
  EXPECT_NEAR(hv[1], 2.0, 1e-9);
}

TEST(Hessian, PowerIterationFindsDominantEigenvalue) {
  const LinearOp op = [](std::span<const double> v) {
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = double(i + 1) * v[i];
    out[2] = -9 * v[2];
    return out;
  };
  PowerIterationOptions o;
  o.iters = 200;
  o.seed = 1;
  o.tolerance = 1e-9;
  const auto e = power_iteration(op, 5, o);
  EXPECT_NEAR(e.value, 9.0, 1e-3);
  EXPECT_EQ(power_iteration(op, 5, o).value, e.value);
}

TEST(Hessian, ModelProbeIsDeterministicAndNonNegative) {
  const auto& w = wforge::testing::synth_world();
  const Tensor x = w.test.images.slice_rows(0, 32);
  const std::vector<int> y(w.test.labels.begin(), w.test.labels.begin() + 32);
  const PowerIterationOptions o{10, 3, 1e-2};
  const auto a = top_eigenvalue(w.fc, x, y, o), b = top_eigenvalue(w.fc, x, y, o);
  EXPECT_EQ(a.value, b.value);
  EXPECT_GE(a.value, 0);
  EXPECT_THROW(top_eigenvalue(w.fc, x, y, PowerIterationOptions{5, 3, 1e-2}), Error);
}
