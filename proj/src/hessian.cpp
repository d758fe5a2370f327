// SPDX-License-Identifier: Apache-2.0
#include "weightforge/hessian.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "weightforge/error.hpp"
#include "weightforge/nn.hpp"
#include "weightforge/rng.hpp"

namespace wforge {
namespace {

double norm2(std::span<const double> v) {
  double s = 0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double dotp(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::size_t layer_of(const Model& model, std::size_t coord) {
  std::size_t at = 0;
  for (std::size_t i = 0; i < model.num_layers(); ++i) {
    at += model.layer(i).parameter_count();
    if (coord < at) return i;
  }
  return model.num_layers();
}

}  // namespace

std::vector<double> hessian_vector_product(const GradientFn& grad,
                                           std::span<const double> theta,
                                           std::span<const double> v) {
  if (theta.size() != v.size()) throw ShapeError("direction does not match parameter count");
  double inf = 0;
  for (double t : theta) inf = std::max(inf, std::abs(t));
  const double eps = 1e-3 * (1.0 + inf);
  std::vector<double> plus(theta.begin(), theta.end());
  std::vector<double> minus(theta.begin(), theta.end());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    plus[i] += eps * v[i];
    minus[i] -= eps * v[i];
  }
  std::vector<double> gp = grad(plus);
  const std::vector<double> gm = grad(minus);
  if (gp.size() != theta.size() || gm.size() != theta.size()) {
    throw ShapeError("gradient oracle returned the wrong length");
  }
  for (std::size_t i = 0; i < gp.size(); ++i) gp[i] = (gp[i] - gm[i]) / (2 * eps);
  return gp;
}

std::vector<double> hessian_vector_product(const Model& model, const Tensor& batch,
                                           std::span<const int> labels,
                                           std::span<const double> v,
                                           double loss_scale) {
  Model work = model;
  const std::vector<Scalar> p = model.parameters();
  const std::vector<double> theta(p.begin(), p.end());
  GradientFn grad = [&](std::span<const double> t) {
    std::vector<Scalar> cast(t.begin(), t.end());
    work.set_parameters(cast);
    const Gradients g = backward(work, batch, labels, {.parameters = true, .input = false});
    const std::vector<Scalar> flat = flatten_gradients(work, g);
    std::vector<double> out(flat.begin(), flat.end());
    for (double& x : out) x *= loss_scale;
    return out;
  };
  std::vector<double> hv = hessian_vector_product(grad, theta, v);
  for (std::size_t i = 0; i < hv.size(); ++i) {
    if (!std::isfinite(hv[i])) {
      throw NumericError("non-finite Hessian-vector product", layer_of(model, i));
    }
  }
  return hv;
}

EigenEstimate power_iteration(const LinearOp& op, std::size_t dim,
                              const PowerIterationOptions& opts) {
  if (dim == 0) throw ShapeError("power iteration on an empty operator");
  if (opts.iters == 0) throw Error("power iteration needs at least one step");
  Rng rng(stream_seed(opts.seed, "power-iteration"));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(dim);
  for (double& x : v) x = normal(rng);
  double n = norm2(v);
  for (double& x : v) x /= n;

  EigenEstimate est;
  double prev = 0;
  for (std::size_t it = 0; it < opts.iters; ++it) {
    std::vector<double> hv = op(v);
    const double lambda = dotp(v, hv);
    est.iterations = it + 1;
    est.converged = it > 0 && std::abs(lambda - prev) <= opts.tolerance * std::abs(lambda);
    est.value = std::abs(lambda);
    prev = lambda;
    n = norm2(hv);
    if (n == 0 || !std::isfinite(n)) {
      est.converged = n == 0;
      break;
    }
    for (std::size_t i = 0; i < dim; ++i) v[i] = hv[i] / n;
  }
  return est;
}

EigenEstimate top_eigenvalue(const Model& model, const Tensor& batch,
                             std::span<const int> labels,
                             const PowerIterationOptions& opts, double loss_scale) {
  if (opts.iters < 10) throw Error("top_eigenvalue needs at least 10 iterations");
  LinearOp op = [&](std::span<const double> v) {
    return hessian_vector_product(model, batch, labels, v, loss_scale);
  };
  return power_iteration(op, model.parameter_count(), opts);
}

}  // namespace wforge
