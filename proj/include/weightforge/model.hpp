// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "weightforge/tensor.hpp"

namespace wforge {

enum class LayerKind { kDense, kConv2D, kMaxPool2D, kFlatten };
enum class Activation { kNone, kReLU };

std::string_view to_string(LayerKind kind);
std::string_view to_string(Activation act);

// One stage of a feed-forward network. Activations are stored channels-last
// ([H, W, C] per sample). A Dense layer flattens whatever it receives.
struct Layer {
  LayerKind kind = LayerKind::kFlatten;
  Tensor weights;  // Dense: [out, in]   Conv2D: [filters, in_channels, k, k]
  Tensor bias;     // Dense: [out]       Conv2D: [filters]
  Activation activation = Activation::kNone;
  std::size_t stride = 1;  // Conv2D and MaxPool2D
  std::size_t window = 0;  // MaxPool2D only

  static Layer dense(std::size_t in, std::size_t out, Activation act);
  static Layer conv2d(std::size_t in_channels, std::size_t filters,
                      std::size_t kernel, std::size_t stride, Activation act);
  static Layer max_pool(std::size_t window, std::size_t stride);
  static Layer flatten();

  bool has_parameters() const {
    return kind == LayerKind::kDense || kind == LayerKind::kConv2D;
  }
  std::size_t parameter_count() const { return weights.size() + bias.size(); }

  friend bool operator==(const Layer&, const Layer&) = default;
};

// Where a model came from. Carried through the model file.
struct Provenance {
  std::uint64_t training_seed = 0;
  std::string dataset_id;
  std::vector<std::string> attack_lineage;

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

// An ordered layer stack whose shapes are checked to compose at construction.
// The last layer is always Dense with `num_classes` outputs and produces raw
// logits; softmax only appears inside the loss.
class Model {
 public:
  Model(Shape input_shape, std::size_t num_classes, std::vector<Layer> layers);

  const Shape& input_shape() const { return shapes_.front(); }
  std::size_t num_classes() const { return num_classes_; }
  std::size_t num_layers() const { return layers_.size(); }

  const std::vector<Layer>& layers() const { return layers_; }
  const Layer& layer(std::size_t i) const { return layers_.at(i); }
  // Parameter values may be edited freely; shapes must not change.
  Layer& layer(std::size_t i) { return layers_.at(i); }

  // Per-sample shape entering / leaving layer i.
  const Shape& layer_input_shape(std::size_t i) const { return shapes_.at(i); }
  const Shape& layer_output_shape(std::size_t i) const {
    return shapes_.at(i + 1);
  }

  std::size_t parameter_count() const;
  // All parameters in layer order, weights before bias.
  std::vector<Scalar> parameters() const;
  void set_parameters(std::span<const Scalar> values);

  // Re-checks the invariants after direct edits. Throws ShapeError.
  void validate() const;

  // Indices of Dense layers other than the output layer.
  std::vector<std::size_t> hidden_dense_layers() const;
  std::vector<std::size_t> conv_layers() const;

  Provenance provenance;

  friend bool operator==(const Model& a, const Model& b) {
    return a.layers_ == b.layers_ && a.shapes_ == b.shapes_ &&
           a.num_classes_ == b.num_classes_;
  }

 private:
  std::vector<Shape> compute_shapes(const Shape& input) const;

  std::size_t num_classes_;
  std::vector<Layer> layers_;
  std::vector<Shape> shapes_;
};

bool same_architecture(const Model& a, const Model& b);

}  // namespace wforge
