// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <numeric>
#include <random>

#include "weightforge/data.hpp"
#include "weightforge/error.hpp"
#include "weightforge/nn.hpp"
#include "weightforge/rng.hpp"

namespace wforge {

std::string to_string(TriggerKind kind) {
  switch (kind) {
    case TriggerKind::kSquare: return "square";
    case TriggerKind::kCheckerboard: return "checkerboard";
    case TriggerKind::kRandom: return "random";
    case TriggerKind::kCustom: return "custom";
  }
  return "?";
}

TriggerKind trigger_kind_from_string(const std::string& name) {
  if (name == "square") return TriggerKind::kSquare;
  if (name == "checkerboard") return TriggerKind::kCheckerboard;
  if (name == "random") return TriggerKind::kRandom;
  if (name == "custom") return TriggerKind::kCustom;
  throw Error("unknown trigger kind '" + name + "'");
}

void TriggerSpec::validate() const {
  if (pattern.rank() != 3 || mask.rank() != 3 || mask.dim(2) != 1 ||
      pattern.dim(0) != mask.dim(0) || pattern.dim(1) != mask.dim(1)) {
    throw ShapeError("trigger pattern must be [H,W,C] with mask [H,W,1]");
  }
  for (Scalar v : pattern.values()) {
    if (!(v >= 0 && v <= 1)) throw Error("trigger pattern outside [0,1]");
  }
  const std::size_t w = mask.dim(1);
  for (std::size_t y = 0; y < mask.dim(0); ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const Scalar m = mask[y * w + x];
      const bool inside = y >= row && y < row + size && x >= col && x < col + size;
      if (m != Scalar(inside ? 1 : 0)) throw Error("trigger mask does not match its box");
    }
  }
  if (target < 0) throw Error("negative target label");
}

TriggerSpec make_trigger(TriggerKind kind, std::size_t size, std::size_t row,
                         std::size_t col, const Shape& image_shape,
                         std::uint64_t seed, int target) {
  if (image_shape.size() != 3) throw ShapeError("image shape must be [H,W,C]");
  const std::size_t h = image_shape[0], w = image_shape[1], c = image_shape[2];
  if (size == 0 || row + size > h || col + size > w) {
    throw Error("trigger box " + std::to_string(size) + "x" + std::to_string(size) +
                " at (" + std::to_string(row) + "," + std::to_string(col) +
                ") does not fit " + shape_string(image_shape));
  }
  if (kind == TriggerKind::kCustom) throw Error("custom triggers carry their own pattern");
  TriggerSpec t;
  t.kind = kind;
  t.size = size;
  t.row = row;
  t.col = col;
  t.seed = seed;
  t.target = target;
  t.pattern = Tensor({h, w, c});
  t.mask = Tensor({h, w, 1});
  Rng rng(stream_seed(seed, "trigger"));
  std::bernoulli_distribution coin(0.5);
  for (std::size_t dy = 0; dy < size; ++dy) {
    for (std::size_t dx = 0; dx < size; ++dx) {
      Scalar v = 1;
      if (kind == TriggerKind::kCheckerboard) v = (dy + dx) % 2 == 0 ? 1 : 0;
      if (kind == TriggerKind::kRandom) v = coin(rng) ? 1 : 0;
      const std::size_t at = (row + dy) * w + (col + dx);
      t.mask[at] = 1;
      for (std::size_t ch = 0; ch < c; ++ch) t.pattern[at * c + ch] = v;
    }
  }
  return t;
}

TriggerSpec make_corner_trigger(TriggerKind kind, std::size_t size,
                                const Shape& image_shape, std::uint64_t seed,
                                int target) {
  if (image_shape.size() != 3 || image_shape[0] < size + 1 || image_shape[1] < size + 1) {
    throw Error("trigger does not fit in the corner of " + shape_string(image_shape));
  }
  return make_trigger(kind, size, image_shape[0] - size - 1, image_shape[1] - size - 1,
                      image_shape, seed, target);
}

Tensor apply_trigger(const Tensor& x, const TriggerSpec& spec) {
  const Shape& ps = spec.pattern.shape();
  const bool single = x.rank() == 3;
  if (!(single || x.rank() == 4) ||
      !std::equal(ps.begin(), ps.end(), x.shape().end() - 3)) {
    throw ShapeError("input " + shape_string(x.shape()) + " does not match trigger " +
                     shape_string(ps));
  }
  const std::size_t c = ps[2];
  const std::size_t pixels = ps[0] * ps[1];
  const std::size_t n = single ? 1 : x.dim(0);
  Tensor out = x;
  for (std::size_t p = 0; p < pixels; ++p) {
    const Scalar m = spec.mask[p];
    if (m == Scalar(0)) continue;
    for (std::size_t s = 0; s < n; ++s) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        const std::size_t at = (s * pixels + p) * c + ch;
        out[at] = (Scalar(1) - m) * x[at] + m * spec.pattern[p * c + ch];
      }
    }
  }
  return out;
}

Dataset apply_trigger(const Dataset& d, const TriggerSpec& spec) {
  Dataset out = d;
  out.images = apply_trigger(d.images, spec);
  return out;
}

std::vector<std::size_t> poison_indices(std::size_t n, const PoisonConfig& cfg) {
  std::size_t k = 0;
  if (cfg.count) {
    k = *cfg.count;
  } else {
    if (!(cfg.rate > 0 && cfg.rate < 1)) throw Error("poison rate must lie in (0,1)");
    k = static_cast<std::size_t>(cfg.rate * double(n));
  }
  if (k == 0 || k > n) throw Error("poison count must lie in [1, N]");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(stream_seed(cfg.seed, "poison"));
  // Partial Fisher-Yates: the first k entries are a uniform sample.
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

Dataset poison_dataset(const Dataset& train, const TriggerSpec& spec,
                       const PoisonConfig& cfg) {
  const std::vector<std::size_t> idx = poison_indices(train.size(), cfg);
  Dataset out = train;
  const std::size_t stride = train.images.size() / train.size();
  const Tensor triggered = apply_trigger(train.subset(idx).images, spec);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    std::copy_n(triggered.data() + i * stride, stride, out.images.data() + idx[i] * stride);
    out.labels[idx[i]] = spec.target;
  }
  out.id = train.id + "+poison";
  return out;
}

double attack_success_rate(const Model& model, const Dataset& test,
                           const TriggerSpec& spec, bool exclude_target) {
  if (test.size() == 0) throw Error("empty test set");
  const std::vector<int> pred = predict(model, apply_trigger(test.images, spec));
  std::size_t hit = 0, total = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (exclude_target && test.labels[i] == spec.target) continue;
    ++total;
    hit += pred[i] == spec.target;
  }
  return total == 0 ? 0.0 : double(hit) / double(total);
}

}  // namespace wforge
