// SPDX-License-Identifier: Apache-2.0
//
// The two reference architectures, their training loop, accuracy, and the
// model file format.
#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "weightforge/data.hpp"
#include "weightforge/model.hpp"

namespace wforge {

// Dense(n_h, ReLU) -> Dense(num_classes). The first layer flattens the input.
Model build_fc(const Shape& input_shape, std::size_t n_h, std::size_t num_classes,
               std::uint64_t seed);

// Conv(32,5x5,s1,ReLU) -> Conv(32,5x5,s1,ReLU) -> MaxPool(2,s2) -> Flatten
// -> Dense(256,ReLU) -> Dense(num_classes). Throws ShapeError on inputs too
// small for the stack.
Model build_cnn(const Shape& input_shape, std::size_t num_classes, std::uint64_t seed);

// Gaussian weights with std sqrt(2 / fan_in), zero biases.
void he_init(Model& model, std::uint64_t seed);

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 64;
  double lr = 0.05;
  double momentum = 0.9;
  std::uint64_t seed = 0;
  // Samples used for the per-epoch training-accuracy history (0 = all).
  std::size_t history_samples = 0;
};

struct TrainHistory {
  std::vector<double> accuracy;  // [0] before training, [e] after epoch e
  std::vector<double> loss;      // mean batch loss per epoch
};

// Minibatch SGD over a seeded per-epoch shuffle. Throws NumericError when the
// loss or a gradient becomes non-finite.
// `on_epoch(e, model)` runs after epoch e (1-based) when set.
using EpochCallback = std::function<void(std::size_t epoch, const Model& model)>;
TrainHistory train(Model& model, const Dataset& data, const TrainConfig& cfg,
                   const EpochCallback& on_epoch = {});

// Argmax accuracy; ties go to the lowest class index.
double evaluate(const Model& model, const Dataset& data);

inline constexpr std::uint32_t kModelFormatVersion = 1;

void save_model(const Model& model, std::ostream& out);
void save_model(const Model& model, const std::string& path);
// Throws ParseError with the byte offset of the first malformed field.
Model load_model(std::istream& in);
Model load_model(const std::string& path);
Model parse_model(const std::vector<std::uint8_t>& bytes);

}  // namespace wforge
