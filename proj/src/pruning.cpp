// SPDX-License-Identifier: Apache-2.0
#include "weightforge/pruning.hpp"

#include <algorithm>
#include <numeric>

#include "weightforge/error.hpp"
#include "weightforge/nn.hpp"

namespace wforge {
namespace {

void require_conv(const Model& model, std::size_t layer) {
  if (layer >= model.num_layers() || model.layer(layer).kind != LayerKind::kConv2D) {
    throw Error("layer " + std::to_string(layer) + " is not a conv layer");
  }
}

double accuracy_from(const Model& model, const Tensor& prefix, std::size_t layer,
                     const std::vector<int>& labels) {
  const std::vector<int> p =
      argmax_rows(forward_range(model, prefix, layer + 1, model.num_layers() - 1));
  std::size_t ok = 0;
  for (std::size_t i = 0; i < p.size(); ++i) ok += p[i] == labels[i];
  return double(ok) / double(p.size());
}

}  // namespace

std::vector<double> channel_activation_magnitudes(const Model& model, std::size_t layer,
                                                  const Tensor& images) {
  require_conv(model, layer);
  const Tensor a = forward_to(model, images, layer);
  const std::size_t c = model.layer_output_shape(layer).back();
  std::vector<double> m(c, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) m[i % c] += std::abs(double(a[i]));
  const double count = double(a.size() / c);
  for (double& v : m) v /= count;
  return m;
}

std::vector<std::size_t> prune_order(const std::vector<double>& magnitudes) {
  std::vector<std::size_t> idx(magnitudes.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return magnitudes[a] < magnitudes[b];
  });
  return idx;
}

PrunePlan plan_magnitude_pruning(const Model& model, std::size_t layer,
                                 const Dataset& data, double budget) {
  require_conv(model, layer);
  PrunePlan plan;
  plan.layer = layer;
  Tensor prefix = forward_to(model, data.images, layer);
  plan.order = prune_order(channel_activation_magnitudes(model, layer, data.images));
  plan.base_accuracy = accuracy_from(model, prefix, layer, data.labels);
  plan.accuracy.push_back(plan.base_accuracy);
  const std::size_t c = model.layer_output_shape(layer).back();
  double acc = plan.base_accuracy;
  for (std::size_t ch : plan.order) {
    if (plan.base_accuracy - acc >= budget) break;
    if (plan.pruned.size() + 1 == c) break;  // keep at least one channel
    for (std::size_t at = ch; at < prefix.size(); at += c) prefix[at] = 0;
    plan.pruned.push_back(ch);
    acc = accuracy_from(model, prefix, layer, data.labels);
    plan.accuracy.push_back(acc);
  }
  return plan;
}

void apply_pruning(Model& model, std::size_t layer, const std::vector<std::size_t>& channels) {
  require_conv(model, layer);
  Layer& l = model.layer(layer);
  const std::size_t per = l.weights.size() / l.weights.dim(0);
  for (std::size_t ch : channels) {
    std::fill_n(l.weights.data() + ch * per, per, Scalar(0));
    l.bias[ch] = 0;
  }
}

}  // namespace wforge
