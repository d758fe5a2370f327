// SPDX-License-Identifier: Apache-2.0
#include "weightforge/optim.hpp"

#include <cmath>

#include "weightforge/error.hpp"

namespace wforge {

SgdOptimizer::SgdOptimizer(double lr, double momentum) : lr_(lr), momentum_(momentum) {
  if (!(lr >= 0) || !std::isfinite(lr)) throw Error("learning rate must be finite and >= 0");
  if (!(momentum >= 0 && momentum < 1)) throw Error("momentum must lie in [0,1)");
}

void SgdOptimizer::set_lr(double lr) {
  if (!(lr >= 0) || !std::isfinite(lr)) throw Error("learning rate must be finite and >= 0");
  lr_ = lr;
}

void SgdOptimizer::step(Model& model, const Gradients& grads) {
  if (grads.layers.size() != model.num_layers()) {
    throw ShapeError("gradient layer count does not match model");
  }
  for (std::size_t i = 0; i < model.num_layers(); ++i) {
    const Layer& l = model.layer(i);
    if (!l.has_parameters()) continue;
    const LayerGradient& g = grads.layers[i];
    if (g.weights.shape() != l.weights.shape() || g.bias.shape() != l.bias.shape()) {
      throw ShapeError("gradient shape mismatch at layer " + std::to_string(i));
    }
    if (!g.weights.all_finite() || !g.bias.all_finite()) {
      throw NumericError("non-finite gradient", i);
    }
  }
  if (velocity_.empty()) velocity_.assign(model.parameter_count(), Scalar(0));
  if (velocity_.size() != model.parameter_count()) {
    throw ShapeError("optimizer state belongs to a different model");
  }
  const Scalar mu = static_cast<Scalar>(momentum_);
  const Scalar lr = static_cast<Scalar>(lr_);
  std::size_t at = 0;
  auto update = [&](Tensor& p, const Tensor& g) {
    for (std::size_t j = 0; j < p.size(); ++j, ++at) {
      velocity_[at] = mu * velocity_[at] + g[j];
      p[j] -= lr * velocity_[at];
    }
  };
  for (std::size_t i = 0; i < model.num_layers(); ++i) {
    Layer& l = model.layer(i);
    if (!l.has_parameters()) continue;
    update(l.weights, grads.layers[i].weights);
    update(l.bias, grads.layers[i].bias);
  }
}

}  // namespace wforge
