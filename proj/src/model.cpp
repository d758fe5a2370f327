// SPDX-License-Identifier: Apache-2.0
#include "weightforge/model.hpp"

#include <algorithm>

#include "weightforge/error.hpp"

namespace wforge {

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::kDense: return "dense";
    case LayerKind::kConv2D: return "conv2d";
    case LayerKind::kMaxPool2D: return "maxpool2d";
    case LayerKind::kFlatten: return "flatten";
  }
  return "?";
}

std::string_view to_string(Activation act) {
  return act == Activation::kReLU ? "relu" : "none";
}

Layer Layer::dense(std::size_t in, std::size_t out, Activation act) {
  Layer l;
  l.kind = LayerKind::kDense;
  l.weights = Tensor({out, in});
  l.bias = Tensor({out});
  l.activation = act;
  return l;
}

Layer Layer::conv2d(std::size_t in_channels, std::size_t filters,
                    std::size_t kernel, std::size_t stride, Activation act) {
  Layer l;
  l.kind = LayerKind::kConv2D;
  l.weights = Tensor({filters, in_channels, kernel, kernel});
  l.bias = Tensor({filters});
  l.activation = act;
  l.stride = stride;
  return l;
}

Layer Layer::max_pool(std::size_t window, std::size_t stride) {
  Layer l;
  l.kind = LayerKind::kMaxPool2D;
  l.window = window;
  l.stride = stride;
  return l;
}

Layer Layer::flatten() { return Layer{}; }

namespace {

std::string where(std::size_t i) { return "layer " + std::to_string(i) + ": "; }

Shape output_shape_of(const Layer& l, const Shape& in, std::size_t index) {
  switch (l.kind) {
    case LayerKind::kDense: {
      if (l.weights.rank() != 2 || l.bias.rank() != 1 ||
          l.bias.dim(0) != l.weights.dim(0)) {
        throw ShapeError(where(index) + "dense weights must be [out,in] with bias [out]");
      }
      if (l.weights.dim(1) != shape_product(in)) {
        throw ShapeError(where(index) + "dense expects " +
                         std::to_string(l.weights.dim(1)) + " inputs, got " +
                         shape_string(in));
      }
      return {l.weights.dim(0)};
    }
    case LayerKind::kConv2D: {
      if (in.size() != 3) throw ShapeError(where(index) + "conv2d needs [H,W,C] input");
      if (l.weights.rank() != 4 || l.weights.dim(2) != l.weights.dim(3) ||
          l.bias.rank() != 1 || l.bias.dim(0) != l.weights.dim(0)) {
        throw ShapeError(where(index) + "conv2d weights must be [F,C,k,k] with bias [F]");
      }
      if (l.weights.dim(1) != in[2]) {
        throw ShapeError(where(index) + "conv2d channel mismatch with input " +
                         shape_string(in));
      }
      const std::size_t k = l.weights.dim(2);
      if (l.stride == 0) throw ShapeError(where(index) + "stride must be positive");
      if (in[0] < k || in[1] < k) {
        throw ShapeError(where(index) + "input " + shape_string(in) +
                         " smaller than kernel");
      }
      return {(in[0] - k) / l.stride + 1, (in[1] - k) / l.stride + 1,
              l.weights.dim(0)};
    }
    case LayerKind::kMaxPool2D: {
      if (!l.weights.empty() || !l.bias.empty()) {
        throw ShapeError(where(index) + "pooling carries no parameters");
      }
      if (in.size() != 3) throw ShapeError(where(index) + "maxpool needs [H,W,C] input");
      if (l.window == 0 || l.stride == 0) {
        throw ShapeError(where(index) + "pool window and stride must be positive");
      }
      if (in[0] < l.window || in[1] < l.window) {
        throw ShapeError(where(index) + "input smaller than pool window");
      }
      return {(in[0] - l.window) / l.stride + 1,
              (in[1] - l.window) / l.stride + 1, in[2]};
    }
    case LayerKind::kFlatten:
      if (!l.weights.empty() || !l.bias.empty()) {
        throw ShapeError(where(index) + "flatten carries no parameters");
      }
      return {shape_product(in)};
  }
  throw ShapeError(where(index) + "unknown layer kind");
}

}  // namespace

Model::Model(Shape input_shape, std::size_t num_classes, std::vector<Layer> layers)
    : num_classes_(num_classes), layers_(std::move(layers)) {
  shapes_ = compute_shapes(input_shape);
}

std::vector<Shape> Model::compute_shapes(const Shape& input) const {
  if (input.empty()) throw ShapeError("model input shape is empty");
  for (std::size_t d : input) {
    if (d == 0) throw ShapeError("model input dimensions must be positive");
  }
  if (layers_.empty()) throw ShapeError("model has no layers");
  if (num_classes_ == 0) throw ShapeError("num_classes must be positive");
  std::vector<Shape> shapes{input};
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    shapes.push_back(output_shape_of(layers_[i], shapes.back(), i));
  }
  const Layer& last = layers_.back();
  if (last.kind != LayerKind::kDense || last.weights.dim(0) != num_classes_) {
    throw ShapeError("final layer must be dense with num_classes outputs");
  }
  return shapes;
}

void Model::validate() const {
  if (compute_shapes(shapes_.front()) != shapes_) {
    throw ShapeError("layer shapes changed after construction");
  }
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const Layer& l : layers_) n += l.parameter_count();
  return n;
}

std::vector<Scalar> Model::parameters() const {
  std::vector<Scalar> out;
  out.reserve(parameter_count());
  for (const Layer& l : layers_) {
    out.insert(out.end(), l.weights.values().begin(), l.weights.values().end());
    out.insert(out.end(), l.bias.values().begin(), l.bias.values().end());
  }
  return out;
}

void Model::set_parameters(std::span<const Scalar> values) {
  if (values.size() != parameter_count()) {
    throw ShapeError("parameter vector has " + std::to_string(values.size()) +
                     " entries, model has " + std::to_string(parameter_count()));
  }
  std::size_t at = 0;
  for (Layer& l : layers_) {
    std::copy_n(values.begin() + at, l.weights.size(), l.weights.data());
    at += l.weights.size();
    std::copy_n(values.begin() + at, l.bias.size(), l.bias.data());
    at += l.bias.size();
  }
}

std::vector<std::size_t> Model::hidden_dense_layers() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i + 1 < layers_.size(); ++i) {
    if (layers_[i].kind == LayerKind::kDense) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> Model::conv_layers() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i].kind == LayerKind::kConv2D) out.push_back(i);
  }
  return out;
}

bool same_architecture(const Model& a, const Model& b) {
  if (a.num_layers() != b.num_layers() || a.input_shape() != b.input_shape() ||
      a.num_classes() != b.num_classes()) {
    return false;
  }
  for (std::size_t i = 0; i < a.num_layers(); ++i) {
    const Layer& x = a.layer(i);
    const Layer& y = b.layer(i);
    if (x.kind != y.kind || x.activation != y.activation || x.stride != y.stride ||
        x.window != y.window || x.weights.shape() != y.weights.shape() ||
        x.bias.shape() != y.bias.shape()) {
      return false;
    }
  }
  return true;
}

}  // namespace wforge
