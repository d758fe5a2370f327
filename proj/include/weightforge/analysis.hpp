// SPDX-License-Identifier: Apache-2.0
//
// Ablation-based candidate discovery and Gaussian separation scoring.
#pragma once

#include <compare>
#include <cstddef>
#include <span>
#include <vector>

#include "weightforge/data.hpp"
#include "weightforge/model.hpp"

namespace wforge {

// A dense unit, or an output channel of a conv layer.
struct NeuronId {
  std::size_t layer = 0;
  std::size_t unit = 0;
  friend auto operator<=>(const NeuronId&, const NeuronId&) = default;
};

struct ActivationStats {
  NeuronId neuron;
  double clean_mean = 0;
  double clean_std = 0;
  double backdoor_mean = 0;
  double backdoor_std = 0;
};

struct SeparationScore {
  NeuronId neuron;
  double overlap = 1;
  double separation = 0;  // 1 - overlap
};

// How a conv channel's [H,W] map becomes one number per sample.
enum class ChannelReduction {
  kSpatialMean,
  kSpatialMax,
  // Value at the position where mean(backdoor - clean) peaks for that channel.
  kPeakLocation,
};

// Accuracy of `model` on `x` when the given units' post-activation outputs
// are forced to zero. The model itself is never modified.
double ablated_accuracy(const Model& model, const Dataset& x,
                        std::span<const NeuronId> units);

// Hidden dense units whose individual ablation lowers accuracy on `x` by at
// most acc_threshold. With `layer` set, only that layer is scanned.
std::vector<NeuronId> ablate_neurons(const Model& model, const Dataset& x,
                                     double acc_threshold);
std::vector<NeuronId> ablate_neurons(const Model& model, const Dataset& x,
                                     double acc_threshold, std::size_t layer);

// Accuracy drop on `x` from zeroing each unit of `layer` on its own, indexed
// by unit. Works for conv and hidden dense layers.
std::vector<double> ablation_drops(const Model& model, const Dataset& x, std::size_t layer);

// Same for conv channels. A model without conv layers yields an empty list.
std::vector<NeuronId> ablate_filters(const Model& model, const Dataset& x,
                                     double acc_threshold);
std::vector<NeuronId> ablate_filters(const Model& model, const Dataset& x,
                                     double acc_threshold, std::size_t layer);

// Per-sample value of each unit of `layer` (post-activation), [N, units].
// Conv channels are reduced to one value per sample with `reduction`
// (kSpatialMean or kSpatialMax).
std::vector<std::vector<double>> unit_activations(
    const Model& model, std::size_t layer, std::span<const std::size_t> units,
    const Tensor& images, ChannelReduction reduction = ChannelReduction::kSpatialMean);

// Population mean/std of post-activation values over clean and backdoor
// batches (same samples, same order). kPeakLocation picks, per channel, the
// spatial position where the mean backdoor-minus-clean difference is largest.
std::vector<ActivationStats> activation_stats(
    const Model& model, std::size_t layer, std::span<const std::size_t> units,
    const Tensor& clean, const Tensor& backdoor,
    ChannelReduction reduction = ChannelReduction::kSpatialMean);

// Mean/std of w.x (before bias and activation) for dense units.
struct MomentPair {
  double mean = 0;
  double std = 0;
};
std::vector<MomentPair> pre_bias_stats(const Model& model, std::size_t layer,
                                       std::span<const std::size_t> units,
                                       const Tensor& images);

inline constexpr double kSigmaFloor = 1e-6;

// Overlap coefficient of N(mu1, s1^2) and N(mu2, s2^2): the integral of the
// pointwise minimum of the two densities. Sigmas are floored at kSigmaFloor.
// Throws Error on negative sigma.
double normal_overlap(double mu1, double s1, double mu2, double s2);

SeparationScore separation(const ActivationStats& s);
std::vector<SeparationScore> separations(std::span<const ActivationStats> stats);

// Top ceil(fraction * count) by separation; ties go to the lower unit index.
std::vector<NeuronId> select_target_neurons(std::span<const SeparationScore> scores,
                                            double fraction);

}  // namespace wforge
