// SPDX-License-Identifier: Apache-2.0
//
// Activation-magnitude channel pruning, shared by the fine-pruning defense and
// the attack's own pruning-resilience check.
#pragma once

#include <cstddef>
#include <vector>

#include "weightforge/data.hpp"
#include "weightforge/model.hpp"

namespace wforge {

// Mean post-activation value of every channel of conv layer `layer` over
// `images` and all spatial positions.
std::vector<double> channel_activation_magnitudes(const Model& model, std::size_t layer,
                                                  const Tensor& images);

// Channel indices sorted by ascending magnitude; ties go to the lower index.
std::vector<std::size_t> prune_order(const std::vector<double>& magnitudes);

struct PrunePlan {
  std::size_t layer = 0;
  std::vector<std::size_t> order;    // full ascending-magnitude order
  std::vector<std::size_t> pruned;   // prefix of `order` that gets removed
  std::vector<double> accuracy;      // [0] unpruned, [j] after j removals
  double base_accuracy = 0;
};

// Removes channels in prune_order one at a time while the accuracy drop on
// `data` is below `budget`. Nothing is pruned when budget <= 0. The model is
// not modified.
PrunePlan plan_magnitude_pruning(const Model& model, std::size_t layer,
                                 const Dataset& data, double budget);

// Zeroes the filters and biases of the given channels.
void apply_pruning(Model& model, std::size_t layer, const std::vector<std::size_t>& channels);

}  // namespace wforge
