// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "weightforge/defense.hpp"
#include "weightforge/error.hpp"
#include "weightforge/nn.hpp"
#include "weightforge/rng.hpp"

namespace wforge {
namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

struct Adam {
  std::vector<double> m, v;
  std::size_t t = 0;
  explicit Adam(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
  void step(std::vector<double>& x, const std::vector<double>& g, double lr) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    ++t;
    const double c1 = 1.0 - std::pow(b1, double(t)), c2 = 1.0 - std::pow(b2, double(t));
    for (std::size_t i = 0; i < x.size(); ++i) {
      m[i] = b1 * m[i] + (1 - b1) * g[i];
      v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
      x[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
  }
};

Tensor compose(const Tensor& images, const std::vector<double>& mask,
               const std::vector<double>& pattern, std::size_t hw, std::size_t c) {
  Tensor out = images;
  const std::size_t n = images.dim(0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < hw; ++p) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        const std::size_t at = (i * hw + p) * c + ch;
        out[at] = static_cast<Scalar>((1.0 - mask[p]) * images[at] + mask[p] * pattern[p * c + ch]);
      }
    }
  }
  return out;
}

double success_rate(const Model& model, const Tensor& x, int label) {
  const std::vector<int> pred = predict(model, x);
  std::size_t hit = 0;
  for (int p : pred) hit += p == label;
  return double(hit) / double(pred.size());
}

ReversedTrigger reverse_one(const Model& model, const Dataset& sample, int label,
                            const CleanseOptions& opts) {
  const Shape shape = sample.image_shape();
  const std::size_t hw = shape[0] * shape[1], c = shape[2];
  Rng rng(stream_seed(opts.seed, "cleanse-class-" + std::to_string(label)));
  std::uniform_real_distribution<double> init(-1.0, 1.0);
  std::vector<double> mz(hw), pz(hw * c);
  for (double& v : mz) v = init(rng);
  for (double& v : pz) v = init(rng);
  Adam adam_m(hw), adam_p(hw * c);
  std::vector<double> mask(hw), pattern(hw * c);
  auto squash = [&] {
    for (std::size_t i = 0; i < hw; ++i) mask[i] = sigmoid(mz[i]);
    for (std::size_t i = 0; i < hw * c; ++i) pattern[i] = sigmoid(pz[i]);
  };
  squash();

  ReversedTrigger best;
  best.label = label;
  best.mask_l1 = std::numeric_limits<double>::infinity();
  double lambda = opts.lambda_init;
  const std::size_t bs = std::min(opts.batch_size, sample.size());
  std::vector<std::size_t> order(sample.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::size_t cursor = order.size();
  std::vector<double> gm(hw), gp(hw * c);
  auto snapshot = [&](double success) {
    ReversedTrigger r;
    r.label = label;
    r.success = success;
    r.mask_l1 = 0;
    for (double v : mask) r.mask_l1 += v;
    r.mask = Tensor({shape[0], shape[1], 1});
    r.pattern = Tensor({shape[0], shape[1], c});
    for (std::size_t i = 0; i < hw; ++i) r.mask[i] = static_cast<Scalar>(mask[i]);
    for (std::size_t i = 0; i < hw * c; ++i) r.pattern[i] = static_cast<Scalar>(pattern[i]);
    return r;
  };

  ReversedTrigger last;
  for (std::size_t it = 0; it < opts.iters; ++it) {
    if (cursor + bs > order.size()) {
      std::shuffle(order.begin(), order.end(), rng);
      cursor = 0;
    }
    const Dataset batch =
        sample.subset(std::span<const std::size_t>(order.data() + cursor, bs));
    cursor += bs;
    const Tensor x = compose(batch.images, mask, pattern, hw, c);
    const std::vector<int> target(bs, label);
    const Gradients g = backward(model, x, target, {.parameters = false, .input = true});
    std::fill(gm.begin(), gm.end(), 0.0);
    std::fill(gp.begin(), gp.end(), 0.0);
    for (std::size_t i = 0; i < bs; ++i) {
      for (std::size_t p = 0; p < hw; ++p) {
        for (std::size_t ch = 0; ch < c; ++ch) {
          const std::size_t at = (i * hw + p) * c + ch;
          const double d = g.input[at];
          gm[p] += d * (pattern[p * c + ch] - batch.images[at]);
          gp[p * c + ch] += d * mask[p];
        }
      }
    }
    bool finite = std::isfinite(g.loss);
    for (std::size_t p = 0; p < hw; ++p) {
      gm[p] = (gm[p] + lambda) * mask[p] * (1.0 - mask[p]);
      finite = finite && std::isfinite(gm[p]);
    }
    for (std::size_t q = 0; q < hw * c; ++q) {
      gp[q] *= pattern[q] * (1.0 - pattern[q]);
      finite = finite && std::isfinite(gp[q]);
    }
    if (!finite) {
      ReversedTrigger bad;
      bad.label = label;
      bad.analyzable = false;
      bad.mask_l1 = std::numeric_limits<double>::quiet_NaN();
      return bad;
    }
    adam_m.step(mz, gm, opts.lr);
    adam_p.step(pz, gp, opts.lr);
    squash();
    if ((it + 1) % opts.patience == 0 || it + 1 == opts.iters) {
      const double s = success_rate(model, compose(sample.images, mask, pattern, hw, c), label);
      last = snapshot(s);
      if (s >= opts.success_gate) {
        if (last.mask_l1 < best.mask_l1) best = last;
        lambda *= opts.lambda_up;
      } else {
        lambda /= opts.lambda_down;
      }
    }
  }
  return std::isfinite(best.mask_l1) ? best : last;
}

}  // namespace

std::vector<ReversedTrigger> reverse_triggers(const Model& model, const Dataset& sample,
                                              const CleanseOptions& opts) {
  if (sample.size() < 64) throw Error("trigger reverse engineering needs at least 64 samples");
  if (opts.iters == 0 || opts.patience == 0 || opts.batch_size == 0) {
    throw Error("cleanse iters, patience and batch_size must be positive");
  }
  std::vector<ReversedTrigger> out;
  for (std::size_t t = 0; t < model.num_classes(); ++t) {
    out.push_back(reverse_one(model, sample, static_cast<int>(t), opts));
  }
  return out;
}

std::vector<double> mad_anomaly_indices(const std::vector<double>& values, double c) {
  if (values.empty()) return {};
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  };
  const double med = median(values);
  std::vector<double> dev;
  for (double v : values) dev.push_back(std::abs(v - med));
  const double mad = c * median(dev);
  std::vector<double> out;
  for (double v : values) {
    const double d = std::abs(v - med);
    out.push_back(mad > 0 ? d / mad : (d > 0 ? std::numeric_limits<double>::infinity() : 0.0));
  }
  return out;
}

DefenseReport neural_cleanse_lite(const Model& model, const Dataset& sample,
                                  const CleanseOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<ReversedTrigger> rev = reverse_triggers(model, sample, opts);
  std::vector<double> norms;
  std::vector<int> labels;
  for (const ReversedTrigger& r : rev) {
    if (!r.analyzable) continue;
    norms.push_back(r.mask_l1);
    labels.push_back(r.label);
  }
  const std::vector<double> idx = mad_anomaly_indices(norms, opts.mad_constant);
  std::vector<double> sorted = norms;
  std::sort(sorted.begin(), sorted.end());
  const double med = sorted.empty() ? 0.0
                     : sorted.size() % 2 ? sorted[sorted.size() / 2]
                                         : 0.5 * (sorted[sorted.size() / 2 - 1] +
                                                  sorted[sorted.size() / 2]);
  DefenseReport r;
  r.defense = "neural_cleanse_lite";
  r.parameter = "class";
  r.seeds = {opts.seed};
  r.scores.assign(rev.size(), std::numeric_limits<double>::quiet_NaN());
  nlohmann::json classes = nlohmann::json::array();
  std::vector<int> flagged;
  for (std::size_t k = 0; k < labels.size(); ++k) {
    const ReversedTrigger& t = rev[static_cast<std::size_t>(labels[k])];
    r.scores[static_cast<std::size_t>(labels[k])] = idx[k];
    const bool small = !opts.below_median_only || t.mask_l1 < med;
    if (idx[k] > opts.threshold && small && t.success >= opts.success_gate) {
      flagged.push_back(labels[k]);
    }
  }
  for (const ReversedTrigger& t : rev) {
    classes.push_back({{"label", t.label},
                       {"mask_l1", std::isfinite(t.mask_l1) ? nlohmann::json(t.mask_l1)
                                                            : nlohmann::json(nullptr)},
                       {"success", t.success},
                       {"analyzable", t.analyzable}});
  }
  r.detected = !flagged.empty();
  r.details = {{"classes", classes},
               {"flagged", flagged},
               {"median_l1", med},
               {"threshold", opts.threshold},
               {"mad_constant", opts.mad_constant},
               {"success_gate", opts.success_gate}};
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

}  // namespace wforge
