// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>

#include "weightforge/error.hpp"
#include "weightforge/handcraft.hpp"
#include "weightforge/nn.hpp"

namespace wforge {

double GateSpec::eval(std::span<const double> x) const {
  if (x.size() != weights.size()) throw ShapeError("gate arity mismatch");
  double z = bias;
  for (std::size_t i = 0; i < x.size(); ++i) z += weights[i] * x[i];
  return std::max(0.0, z);
}

GateSpec gate_not(double w_magnitude, double epsilon) {
  if (!(w_magnitude > 0)) throw Error("not gate needs a positive weight magnitude");
  return {{-w_magnitude}, w_magnitude, epsilon};
}

namespace {
void check_pair(double w1, double w2, double epsilon) {
  if (!(w1 > 0 && w2 > 0)) throw Error("gate weights must be positive");
  if (!(epsilon > 0 && epsilon < std::min(w1, w2))) {
    throw Error("gate epsilon must lie in (0, min(w1,w2))");
  }
}
}  // namespace

GateSpec gate_and(double w1, double w2, double epsilon) {
  check_pair(w1, w2, epsilon);
  return {{w1, w2}, -std::max(w1, w2) - epsilon, epsilon};
}

GateSpec gate_or(double w1, double w2, double epsilon) {
  check_pair(w1, w2, epsilon);
  return {{w1, w2}, -std::min(w1, w2) + epsilon, epsilon};
}

Model build_example_backdoor(const ExampleBackdoorParams& p) {
  const GateSpec inv = gate_not(p.not_weight);
  // The and-gate sees the not-output (0 or not_weight) and x2 (0 or 1); scale
  // its first weight so both inputs contribute and_weight when "on".
  const double w21 = p.and_weight / p.not_weight;
  const GateSpec conj = gate_and(p.and_weight, p.and_weight, p.epsilon);

  Layer l0 = Layer::dense(2, 2, Activation::kReLU);
  l0.weights = Tensor({2, 2}, {static_cast<Scalar>(inv.weights[0]), 0, 0, 1});
  l0.bias = Tensor({2}, {static_cast<Scalar>(inv.bias), 0});
  Layer l1 = Layer::dense(2, 1, Activation::kReLU);
  l1.weights = Tensor({1, 2}, {static_cast<Scalar>(w21), static_cast<Scalar>(conj.weights[1])});
  l1.bias = Tensor({1}, {static_cast<Scalar>(conj.bias)});
  Layer l2 = Layer::dense(1, 1, Activation::kNone);
  l2.weights = Tensor({1, 1}, {static_cast<Scalar>(p.amplification)});
  Model m({2}, 1, {l0, l1, l2});
  m.provenance.attack_lineage.push_back("example-backdoor");

  const Tensor inputs({4, 2}, {0, 0, 0, 1, 1, 0, 1, 1});
  const Tensor out = forward_logits(m, inputs);
  for (std::size_t i = 0; i < 4; ++i) {
    const bool want = i == 1;
    if ((out[i] > 0) != want) {
      throw InjectionError("gates", "example circuit truth table mismatch at row " +
                                        std::to_string(i));
    }
  }
  return m;
}

}  // namespace wforge
