// SPDX-License-Identifier: Apache-2.0
//
// Forward and backward passes over a Model. Batches are [B] + input_shape.
// Forward evaluation never mutates the model and may run concurrently on
// different batches.
#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "weightforge/model.hpp"
#include "weightforge/tensor.hpp"

namespace wforge {

// Post-activation output of every layer for one batch.
struct ForwardTrace {
  std::vector<Tensor> activations;  // activations[i] is [B] + output_shape(i)
  Tensor logits;                    // [B, num_classes]
};

// Called after each layer with that layer's post-activation output; may edit
// it in place (e.g. to ablate a unit). The edit propagates downstream.
using LayerHook = std::function<void(std::size_t layer, Tensor& activation)>;

ForwardTrace forward(const Model& model, const Tensor& batch,
                     const LayerHook& hook = {});

// Logits only; does not retain intermediate activations.
Tensor forward_logits(const Model& model, const Tensor& batch,
                      const LayerHook& hook = {});

// Output of layer `layer` only (runs layers 0..layer).
Tensor forward_to(const Model& model, const Tensor& batch, std::size_t layer,
                  const LayerHook& hook = {});

// Runs layers first..last on `input`, which must be shaped like the output of
// layer first-1 (or like a batch when first == 0).
Tensor forward_range(const Model& model, const Tensor& input, std::size_t first,
                     std::size_t last, const LayerHook& hook = {});

// Argmax per row; ties resolve to the lowest class index.
std::vector<int> argmax_rows(const Tensor& logits);

// Predicted class for every sample of `images` ([N] + input_shape), evaluated
// in chunks of `chunk` samples across worker threads.
std::vector<int> predict(const Model& model, const Tensor& images,
                         const LayerHook& hook = {}, std::size_t chunk = 256);

// Mean softmax cross-entropy over the batch. When `grad` is non-null it
// receives d(loss)/d(logits).
double softmax_cross_entropy(const Tensor& logits, std::span<const int> labels,
                             Tensor* grad = nullptr);

struct LayerGradient {
  Tensor weights;  // empty for parameterless layers
  Tensor bias;
};

struct Gradients {
  std::vector<LayerGradient> layers;
  Tensor input;  // d(loss)/d(batch); empty if not requested
  double loss = 0;
};

struct BackwardOptions {
  bool parameters = true;
  bool input = true;
};

// Gradient of the mean cross-entropy loss w.r.t. every parameter and the batch.
Gradients backward(const Model& model, const Tensor& batch,
                   std::span<const int> labels, BackwardOptions opts = {});

// Backpropagates `seed` = d(loss)/d(activation of layer `from`) through layers
// from..0. `trace` must come from forward() on the same batch. Parameter
// gradients for layers after `from` are left empty.
Gradients backpropagate(const Model& model, const Tensor& batch,
                        const ForwardTrace& trace, std::size_t from,
                        const Tensor& seed, BackwardOptions opts = {});

// Concatenated parameter gradient in Model::parameters() order.
std::vector<Scalar> flatten_gradients(const Model& model, const Gradients& g);

}  // namespace wforge
