// SPDX-License-Identifier: Apache-2.0
//
// Curvature of the training loss via finite differences of gradients.
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "weightforge/model.hpp"
#include "weightforge/tensor.hpp"

namespace wforge {

// A gradient oracle over a flat parameter vector.
using GradientFn = std::function<std::vector<double>(std::span<const double> theta)>;
// A symmetric linear operator, e.g. v -> Hv.
using LinearOp = std::function<std::vector<double>(std::span<const double> v)>;

// Hv ~= (g(theta + eps v) - g(theta - eps v)) / (2 eps),
// eps = 1e-3 * (1 + max|theta|).
std::vector<double> hessian_vector_product(const GradientFn& grad,
                                           std::span<const double> theta,
                                           std::span<const double> v);

// Hessian of loss_scale * (mean cross-entropy) at the model's parameters.
// The model is not modified. Throws NumericError naming the first layer whose
// entry of Hv is non-finite.
std::vector<double> hessian_vector_product(const Model& model, const Tensor& batch,
                                           std::span<const int> labels,
                                           std::span<const double> v,
                                           double loss_scale = 1.0);

struct EigenEstimate {
  double value = 0;         // |lambda_max|
  bool converged = false;   // relative change of the last step <= tolerance
  std::size_t iterations = 0;
};

struct PowerIterationOptions {
  std::size_t iters = 20;
  std::uint64_t seed = 0;
  double tolerance = 1e-2;
};

// Power iteration from a seeded Gaussian start with a Rayleigh-quotient
// readout. Returns the dominant eigenvalue magnitude.
EigenEstimate power_iteration(const LinearOp& op, std::size_t dim,
                              const PowerIterationOptions& opts);

// Requires opts.iters >= 10.
EigenEstimate top_eigenvalue(const Model& model, const Tensor& batch,
                             std::span<const int> labels,
                             const PowerIterationOptions& opts,
                             double loss_scale = 1.0);

}  // namespace wforge
