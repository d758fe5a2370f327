// SPDX-License-Identifier: Apache-2.0
//
// Datasets, trigger patterns and the two headline metrics.
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "weightforge/model.hpp"
#include "weightforge/tensor.hpp"

namespace wforge {

// Images [N,H,W,C] in [0,1] with integer labels in [0, num_classes).
struct Dataset {
  Tensor images;
  std::vector<int> labels;
  std::size_t num_classes = 10;
  std::string id;

  std::size_t size() const { return labels.size(); }
  Shape image_shape() const;
  Dataset subset(std::span<const std::size_t> indices) const;
  Dataset slice(std::size_t begin, std::size_t end) const;
  // First n samples after a seeded shuffle.
  Dataset sample(std::size_t n, std::uint64_t seed) const;
  // Throws Error when an invariant is broken.
  void validate() const;
};

// Big-endian IDX pair (magic 0x00000803 images, 0x00000801 labels). Pixels
// are divided by 255. Throws ParseError with the failing byte offset.
Dataset load_mnist_idx(const std::string& images_path, const std::string& labels_path);
Dataset parse_mnist_idx(std::span<const std::uint8_t> images,
                        std::span<const std::uint8_t> labels);

struct SynthOptions {
  std::size_t side = 28;
  double amplitude = 0.8;   // peak height of each class blob
  double blob_sigma = 3.0;  // blob radius in pixels
  double noise = 0.15;      // per-pixel Gaussian noise std
};

// Class-conditional Gaussian blobs on a 28x28x1 canvas. Label i % num_classes
// for sample i, so classes are balanced.
Dataset synth_dataset(std::size_t num_classes, std::size_t n, std::uint64_t seed,
                      const SynthOptions& opts = {});

enum class TriggerKind { kSquare, kCheckerboard, kRandom, kCustom };
std::string to_string(TriggerKind kind);
TriggerKind trigger_kind_from_string(const std::string& name);

// Pattern and binary mask composed as x' = (1-m) x + m pattern.
struct TriggerSpec {
  TriggerKind kind = TriggerKind::kSquare;
  std::size_t size = 4;
  std::size_t row = 0;  // top-left of the square patch
  std::size_t col = 0;
  std::uint64_t seed = 0;
  int target = 0;
  Tensor pattern;  // [H,W,C] in [0,1]
  Tensor mask;     // [H,W,1] in {0,1}

  void validate() const;
};

// Square = all ones; checkerboard starts with 1 at the patch's top-left;
// random = seeded Bernoulli(0.5) per pixel. Throws Error when the patch
// leaves the image.
TriggerSpec make_trigger(TriggerKind kind, std::size_t size, std::size_t row,
                         std::size_t col, const Shape& image_shape,
                         std::uint64_t seed, int target);

// Lower-right placement with a one-pixel margin.
TriggerSpec make_corner_trigger(TriggerKind kind, std::size_t size,
                                const Shape& image_shape, std::uint64_t seed,
                                int target);

// Accepts one image [H,W,C] or a batch [N,H,W,C].
Tensor apply_trigger(const Tensor& x, const TriggerSpec& spec);
// Every image triggered; labels kept.
Dataset apply_trigger(const Dataset& d, const TriggerSpec& spec);

struct PoisonConfig {
  double rate = 0.1;
  std::optional<std::size_t> count;  // overrides rate when set
  std::uint64_t seed = 0;
};

// Indices that poison_dataset would poison, ascending.
std::vector<std::size_t> poison_indices(std::size_t n, const PoisonConfig& cfg);
Dataset poison_dataset(const Dataset& train, const TriggerSpec& spec,
                       const PoisonConfig& cfg);

// Fraction of triggered test samples predicted as spec.target. With
// exclude_target, samples whose true label is the target are skipped.
double attack_success_rate(const Model& model, const Dataset& test,
                           const TriggerSpec& spec, bool exclude_target = false);

}  // namespace wforge
