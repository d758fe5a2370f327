// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>

#include "weightforge/defense.hpp"
#include "weightforge/error.hpp"
#include "weightforge/nn.hpp"
#include "weightforge/rng.hpp"

namespace wforge {

double AdvConfig::step() const {
  if (step_size) return *step_size;
  if (norm == Norm::kLinf) return epsilon / 4.0;
  return steps == 0 ? 0.0 : 2.5 * epsilon / double(steps);
}

void AdvConfig::validate() const {
  if (steps < 1) throw ConfigError("adv.steps", "must be at least 1");
  if (!(epsilon > 0)) throw ConfigError("adv.epsilon", "must be positive");
  if (step_size && !(*step_size > 0)) throw ConfigError("adv.step_size", "must be positive");
}

AdvConfig AdvConfig::l2(std::size_t steps, double eps) {
  AdvConfig c;
  c.norm = Norm::kL2;
  c.steps = steps;
  c.epsilon = eps;
  return c;
}

AdvConfig AdvConfig::linf(std::size_t steps, double eps) {
  AdvConfig c;
  c.norm = Norm::kLinf;
  c.steps = steps;
  c.epsilon = eps;
  return c;
}

namespace {

// Projects x - x0 back into the epsilon ball (per sample) and into [0,1].
void project(Tensor& x, const Tensor& x0, std::size_t per, const AdvConfig& cfg) {
  const std::size_t n = x.size() / per;
  for (std::size_t i = 0; i < n; ++i) {
    Scalar* xi = x.data() + i * per;
    const Scalar* oi = x0.data() + i * per;
    if (cfg.norm == Norm::kLinf) {
      for (std::size_t j = 0; j < per; ++j) {
        xi[j] = static_cast<Scalar>(
            std::clamp(double(xi[j]), double(oi[j]) - cfg.epsilon, double(oi[j]) + cfg.epsilon));
      }
    } else {
      double norm = 0;
      for (std::size_t j = 0; j < per; ++j) norm += (double(xi[j]) - oi[j]) * (double(xi[j]) - oi[j]);
      norm = std::sqrt(norm);
      if (norm > cfg.epsilon) {
        const double s = cfg.epsilon / norm;
        for (std::size_t j = 0; j < per; ++j) {
          xi[j] = static_cast<Scalar>(oi[j] + s * (double(xi[j]) - oi[j]));
        }
      }
    }
    for (std::size_t j = 0; j < per; ++j) xi[j] = std::clamp(xi[j], Scalar(0), Scalar(1));
  }
}

Tensor pgd_chunk(const Model& model, const Tensor& x0, std::span<const int> labels,
                 const AdvConfig& cfg, bool targeted, Rng& rng) {
  const std::size_t n = x0.dim(0), per = x0.size() / n;
  Tensor x = x0;
  if (cfg.random_start) {
    std::uniform_real_distribution<double> u(-cfg.epsilon, cfg.epsilon);
    for (std::size_t j = 0; j < x.size(); ++j) x[j] = static_cast<Scalar>(double(x[j]) + u(rng));
    project(x, x0, per, cfg);
  }
  const double step = cfg.step();
  for (std::size_t it = 0; it < cfg.steps; ++it) {
    const Gradients g = backward(model, x, labels, {.parameters = false, .input = true});
    const double dir = targeted ? -1.0 : 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      const Scalar* gi = g.input.data() + i * per;
      Scalar* xi = x.data() + i * per;
      if (cfg.norm == Norm::kLinf) {
        for (std::size_t j = 0; j < per; ++j) {
          const double s = gi[j] > 0 ? 1.0 : (gi[j] < 0 ? -1.0 : 0.0);
          xi[j] = static_cast<Scalar>(double(xi[j]) + dir * step * s);
        }
      } else {
        double norm = 0;
        for (std::size_t j = 0; j < per; ++j) norm += double(gi[j]) * gi[j];
        norm = std::sqrt(norm);
        if (!(norm > 0)) continue;
        for (std::size_t j = 0; j < per; ++j) {
          xi[j] = static_cast<Scalar>(double(xi[j]) + dir * step * gi[j] / norm);
        }
      }
    }
    project(x, x0, per, cfg);
  }
  return x;
}

}  // namespace

Tensor pgd(const Model& model, const Tensor& images, std::span<const int> labels,
           const AdvConfig& cfg, bool targeted) {
  if (!(cfg.epsilon > 0)) throw ConfigError("adv.epsilon", "must be positive");
  if (images.rank() < 2 || labels.size() != images.dim(0)) {
    throw ShapeError("pgd needs one label per image");
  }
  if (cfg.steps == 0 && !cfg.random_start) return images;
  constexpr std::size_t kChunk = 512;
  const std::size_t n = images.dim(0);
  Rng rng(stream_seed(cfg.seed, "pgd"));
  Tensor out = images;
  const std::size_t per = images.size() / n;
  for (std::size_t b = 0; b < n; b += kChunk) {
    const std::size_t e = std::min(n, b + kChunk);
    const Tensor adv = pgd_chunk(model, images.slice_rows(b, e), labels.subspan(b, e - b), cfg,
                                 targeted, rng);
    std::copy(adv.values().begin(), adv.values().end(), out.data() + b * per);
  }
  return out;
}

DefenseReport reconstruct_triggers(const Model& model, const Dataset& sample,
                                   const Dataset& test, const TriggerSpec& spec,
                                   const ReconstructOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  if (sample.size() < opts.samples || opts.samples == 0) {
    throw Error("trigger reconstruction needs " + std::to_string(opts.samples) + " samples");
  }
  const Dataset x = sample.slice(0, opts.samples);
  const std::vector<int> target(x.size(), spec.target);
  const Tensor adv = pgd(model, x.images, target, opts.adv, /*targeted=*/true);
  const std::size_t per = adv.size() / adv.dim(0);
  DefenseReport r;
  r.defense = "reconstruct_triggers";
  r.parameter = "sample";
  r.seeds = {opts.adv.seed};
  r.accuracy_before = evaluate(model, test);
  r.asr_before = attack_success_rate(model, test, spec);
  std::size_t best = 0;
  double total = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    TriggerSpec patch = spec;
    patch.kind = TriggerKind::kCustom;
    patch.pattern = Tensor(spec.pattern.shape());
    std::copy_n(adv.data() + i * per, per, patch.pattern.data());
    const double s = attack_success_rate(model, test, patch);
    r.sweep.push_back({double(i), r.accuracy_before, s});
    total += s;
    if (s > r.sweep[best].asr) best = i;
  }
  r.readout = double(best);
  r.accuracy_after = r.accuracy_before;
  r.asr_after = r.sweep[best].asr;
  r.details = {{"best_patch", best},
               {"best_success", r.sweep[best].asr},
               {"mean_success", total / double(x.size())},
               {"norm", opts.adv.norm == Norm::kL2 ? "l2" : "linf"},
               {"epsilon", opts.adv.epsilon},
               {"steps", opts.adv.steps},
               {"step_size", opts.adv.step()}};
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

DefenseReport misclassification_bias(const Model& model, const Dataset& test, int target,
                                     const AdvConfig& adv) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t k = model.num_classes();
  if (target < 0 || static_cast<std::size_t>(target) >= k) throw Error("target out of range");
  const Tensor x = pgd(model, test.images, test.labels, adv, /*targeted=*/false);
  const std::vector<int> pred = predict(model, x);
  std::vector<std::size_t> hist(k, 0);
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] == test.labels[i]) continue;
    ++hist[static_cast<std::size_t>(pred[i])];
    ++wrong;
  }
  const double share =
      wrong == 0 ? 0.0 : double(hist[static_cast<std::size_t>(target)]) / double(wrong);
  const double bias = wrong == 0 ? 0.0 : share - 1.0 / double(k);
  DefenseReport r;
  r.defense = "misclassification_bias";
  r.parameter = "class";
  r.seeds = {adv.seed};
  r.accuracy_before = evaluate(model, test);
  r.accuracy_after = 1.0 - double(wrong) / double(pred.size());
  r.scores = {bias};
  r.details = {{"histogram", hist},
               {"misclassified", wrong},
               {"target", target},
               {"target_share", share},
               {"bias", bias},
               {"norm", adv.norm == Norm::kL2 ? "l2" : "linf"},
               {"epsilon", adv.epsilon},
               {"steps", adv.steps}};
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

}  // namespace wforge
