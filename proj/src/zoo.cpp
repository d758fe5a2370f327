// SPDX-License-Identifier: Apache-2.0
#include "weightforge/zoo.hpp"

#include <cmath>
#include <numeric>
#include <random>

#include "weightforge/error.hpp"
#include "weightforge/nn.hpp"
#include "weightforge/optim.hpp"
#include "weightforge/rng.hpp"

namespace wforge {

void he_init(Model& model, std::uint64_t seed) {
  Rng rng(stream_seed(seed, "init"));
  for (std::size_t i = 0; i < model.num_layers(); ++i) {
    Layer& l = model.layer(i);
    if (!l.has_parameters()) continue;
    const std::size_t fan_in = l.weights.size() / l.weights.dim(0);
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / double(fan_in)));
    for (Scalar& w : l.weights.values()) w = static_cast<Scalar>(normal(rng));
    l.bias.fill(0);
  }
}

Model build_fc(const Shape& input_shape, std::size_t n_h, std::size_t num_classes,
               std::uint64_t seed) {
  const std::size_t in = shape_product(input_shape);
  if (in == 0 || n_h == 0 || num_classes == 0) throw ShapeError("fc dimensions must be positive");
  Model m(input_shape, num_classes,
          {Layer::dense(in, n_h, Activation::kReLU),
           Layer::dense(n_h, num_classes, Activation::kNone)});
  he_init(m, seed);
  m.provenance.training_seed = seed;
  return m;
}

Model build_cnn(const Shape& input_shape, std::size_t num_classes, std::uint64_t seed) {
  if (input_shape.size() != 3) throw ShapeError("cnn input must be [H,W,C]");
  const std::size_t h = input_shape[0], w = input_shape[1];
  if (h < 10 || w < 10) {
    throw ShapeError("cnn input " + shape_string(input_shape) +
                     " too small for two 5x5 convolutions and a 2x2 pool");
  }
  const std::size_t ph = (h - 8 - 2) / 2 + 1, pw = (w - 8 - 2) / 2 + 1;
  Model m(input_shape, num_classes,
          {Layer::conv2d(input_shape[2], 32, 5, 1, Activation::kReLU),
           Layer::conv2d(32, 32, 5, 1, Activation::kReLU), Layer::max_pool(2, 2),
           Layer::flatten(), Layer::dense(ph * pw * 32, 256, Activation::kReLU),
           Layer::dense(256, num_classes, Activation::kNone)});
  he_init(m, seed);
  m.provenance.training_seed = seed;
  return m;
}

double evaluate(const Model& model, const Dataset& data) {
  if (data.size() == 0) throw Error("cannot evaluate on an empty dataset");
  const std::vector<int> pred = predict(model, data.images);
  std::size_t ok = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) ok += pred[i] == data.labels[i];
  return double(ok) / double(pred.size());
}

TrainHistory train(Model& model, const Dataset& data, const TrainConfig& cfg,
                   const EpochCallback& on_epoch) {
  if (data.size() == 0) throw Error("cannot train on an empty dataset");
  if (cfg.batch_size == 0) throw Error("batch_size must be positive");
  const std::size_t n = data.size();
  const std::size_t bs = std::min(cfg.batch_size, n);
  const Dataset probe = cfg.history_samples == 0 || cfg.history_samples >= n
                            ? data
                            : data.slice(0, cfg.history_samples);
  TrainHistory h;
  h.accuracy.push_back(evaluate(model, probe));
  SgdOptimizer opt(cfg.lr, cfg.momentum);
  Rng rng(stream_seed(cfg.seed, "train-shuffle"));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0;
    std::size_t batches = 0;
    for (std::size_t b = 0; b < n; b += bs) {
      const std::size_t end = std::min(n, b + bs);
      const Dataset batch =
          data.subset(std::span<const std::size_t>(order.data() + b, end - b));
      const Gradients g =
          backward(model, batch.images, batch.labels, {.parameters = true, .input = false});
      if (!std::isfinite(g.loss)) {
        throw NumericError("training loss diverged at epoch " + std::to_string(e) +
                               ", batch " + std::to_string(batches),
                           model.num_layers() - 1);
      }
      opt.step(model, g);
      total += g.loss;
      ++batches;
    }
    h.loss.push_back(total / double(batches));
    h.accuracy.push_back(evaluate(model, probe));
    if (on_epoch) on_epoch(e + 1, model);
  }
  if (cfg.epochs > 0) {
    model.provenance.training_seed = cfg.seed;
    model.provenance.dataset_id = data.id;
  }
  return h;
}

}  // namespace wforge
