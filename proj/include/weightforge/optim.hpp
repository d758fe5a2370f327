// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "weightforge/model.hpp"
#include "weightforge/nn.hpp"

namespace wforge {

// SGD with heavy-ball momentum:  v <- momentum*v + g;  p <- p - lr*v.
// Velocity is kept per optimizer instance, in Model::parameters() order.
class SgdOptimizer {
 public:
  SgdOptimizer(double lr, double momentum);

  // Throws NumericError (carrying the layer index) if any gradient entry is
  // non-finite; the model is left untouched in that case.
  void step(Model& model, const Gradients& grads);

  double lr() const { return lr_; }
  double momentum() const { return momentum_; }
  void set_lr(double lr);

 private:
  double lr_;
  double momentum_;
  std::vector<Scalar> velocity_;
};

}  // namespace wforge
