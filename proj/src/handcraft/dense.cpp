// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <limits>

#include "weightforge/error.hpp"
#include "weightforge/handcraft.hpp"
#include "weightforge/nn.hpp"

namespace wforge {
namespace {

// Input to dense layer `layer`, flattened to [N, in].
std::vector<Scalar> dense_input(const Model& model, std::size_t layer, const Tensor& images) {
  const Tensor x = layer == 0 ? images : forward_to(model, images, layer - 1);
  return {x.values().begin(), x.values().end()};
}

// Post-ReLU separation of one unit given its incoming row and bias.
double unit_separation(const Layer& l, std::size_t unit, const std::vector<Scalar>& xc,
                       const std::vector<Scalar>& xb, std::size_t in) {
  const std::size_t n = xc.size() / in;
  const Scalar* w = l.weights.data() + unit * in;
  auto stats = [&](const std::vector<Scalar>& x) {
    double s = 0, s2 = 0;
    for (std::size_t i = 0; i < n; ++i) {
      double z = l.bias[unit];
      const Scalar* row = x.data() + i * in;
      for (std::size_t j = 0; j < in; ++j) z += double(w[j]) * double(row[j]);
      if (l.activation == Activation::kReLU) z = std::max(0.0, z);
      s += z;
      s2 += z * z;
    }
    const double mean = s / double(n);
    return MomentPair{mean, std::sqrt(std::max(0.0, s2 / double(n) - mean * mean))};
  };
  const MomentPair c = stats(xc), b = stats(xb);
  return 1.0 - normal_overlap(c.mean, c.std, b.mean, b.std);
}

}  // namespace

void increase_separation_fc(Model& model, std::size_t layer,
                            std::span<const std::size_t> targets,
                            std::span<const std::size_t> sources, const Tensor& clean,
                            const Tensor& backdoor, const AttackConfig& cfg,
                            LayerInjection& record, double weight_cap) {
  Layer& l = model.layer(layer);
  if (l.kind != LayerKind::kDense) throw InjectionError("separation", "layer is not dense");
  const std::size_t in = l.weights.dim(1);
  const std::vector<Scalar> xc = dense_input(model, layer, clean);
  const std::vector<Scalar> xb = dense_input(model, layer, backdoor);
  const std::size_t n = xc.size() / in;

  // Direction of the trigger's effect at every source unit.
  std::vector<int> sign(sources.size(), 0);
  for (std::size_t k = 0; k < sources.size(); ++k) {
    const std::size_t s = sources[k];
    if (s >= in) throw InjectionError("separation", "source unit out of range");
    double d = 0;
    for (std::size_t i = 0; i < n; ++i) d += double(xb[i * in + s]) - double(xc[i * in + s]);
    d /= double(n);
    sign[k] = d > 1e-6 ? 1 : (d < -1e-6 ? -1 : 0);
  }
  std::vector<bool> is_source(in, false);
  for (std::size_t k = 0; k < sources.size(); ++k) is_source[sources[k]] = sign[k] != 0;

  const double cap = cfg.weight_cap ? weight_cap : std::numeric_limits<double>::infinity();
  std::size_t reached = 0;
  double worst = 1.0;
  std::size_t worst_unit = 0;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    const std::size_t u = targets[t];
    Scalar* w = l.weights.data() + u * in;
    const std::vector<Scalar> orig(w, w + in);
    double c = cfg.weight_multipliers.empty() ? 1.0 : cfg.weight_multipliers.front();
    auto set_sources = [&](double mult) {
      bool all_capped = true;
      for (std::size_t k = 0; k < sources.size(); ++k) {
        if (sign[k] == 0) continue;
        const double mag = std::min(mult * std::abs(double(orig[sources[k]])), cap);
        if (mag < cap) all_capped = false;
        w[sources[k]] = static_cast<Scalar>(sign[k] * mag);
      }
      return all_capped;
    };
    double sep = unit_separation(l, u, xc, xb, in);
    double used = 1.0;
    if (sep < cfg.sep_threshold || cfg.maximize_multiplier) {
      for (std::size_t step = 0; step <= cfg.max_multiplier_steps; ++step) {
        const bool capped = set_sources(c);
        used = c;
        sep = unit_separation(l, u, xc, xb, in);
        if (capped) break;
        if (sep >= cfg.sep_threshold && !cfg.maximize_multiplier) break;
        c *= cfg.multiplier_growth;
      }
    }
    double shrink = 1.0;
    for (std::size_t step = 0; sep < cfg.sep_threshold && step < cfg.max_shrink_steps; ++step) {
      shrink *= cfg.shrink_factor;
      for (std::size_t j = 0; j < in; ++j) {
        if (!is_source[j]) w[j] = static_cast<Scalar>(double(orig[j]) * shrink);
      }
      sep = unit_separation(l, u, xc, xb, in);
    }
    record.multipliers.push_back(used);
    record.shrink_factors.push_back(shrink);
    if (sep >= cfg.sep_floor) ++reached;
    if (sep < worst) {
      worst = sep;
      worst_unit = u;
    }
  }
  if (reached == 0 && !targets.empty()) {
    throw InjectionError("separation", "layer " + std::to_string(layer) + " unit " +
                                           std::to_string(worst_unit) + " stalled at " +
                                           std::to_string(worst) + " < sep_floor");
  }
}

std::vector<double> set_guard_bias(Model& model, std::size_t layer,
                                   std::span<const std::size_t> targets,
                                   std::span<const MomentPair> clean_pre_bias, double k,
                                   std::span<const double> floors) {
  if (clean_pre_bias.size() != targets.size() ||
      (!floors.empty() && floors.size() != targets.size())) {
    throw InjectionError("guard", "statistics do not match the target list");
  }
  Layer& l = model.layer(layer);
  std::vector<double> out;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    double threshold = clean_pre_bias[t].mean + k * clean_pre_bias[t].std;
    if (!floors.empty()) threshold = std::max(threshold, floors[t]);
    const double b = threshold == 0 ? 0.0 : -threshold;
    l.bias[targets[t]] = static_cast<Scalar>(b);
    out.push_back(b);
  }
  return out;
}

double logit_multiplier_for(const Model& model, std::span<const std::size_t> targets,
                            const Tensor& clean, const Tensor& backdoor,
                            double margin_factor, double percentile) {
  if (targets.empty()) throw InjectionError("logit", "no target neurons");
  const Tensor logits = forward_logits(model, clean);
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  std::vector<double> top(n);
  for (std::size_t i = 0; i < n; ++i) {
    top[i] = *std::max_element(logits.data() + i * k, logits.data() + (i + 1) * k);
  }
  std::sort(top.begin(), top.end());
  const std::size_t at =
      std::min(n - 1, static_cast<std::size_t>(std::ceil(percentile * double(n))) - 1);
  const double level = std::max(top[at], 1.0);
  const std::size_t hidden = model.num_layers() - 2;
  const Tensor a = forward_to(model, backdoor, hidden);
  const std::size_t width = a.size() / a.dim(0);
  double sum = 0;
  for (std::size_t u : targets) {
    double m = 0;
    for (std::size_t i = 0; i < a.dim(0); ++i) m += a[i * width + u];
    sum += m / double(a.dim(0));
  }
  if (!(sum > 0)) {
    throw InjectionError("logit", "targets are silent on triggered inputs; raise n_i");
  }
  return margin_factor * level / sum;
}

void amplify_logit(Model& model, std::span<const std::size_t> targets_last_hidden, int y_t,
                   double c_n, std::optional<double> cap, bool suppress_others) {
  Layer& out = model.layer(model.num_layers() - 1);
  const std::size_t classes = out.weights.dim(0), in = out.weights.dim(1);
  if (y_t < 0 || static_cast<std::size_t>(y_t) >= classes) {
    throw InjectionError("logit", "target label out of range");
  }
  double w = c_n;
  if (cap) w = std::min(w, *cap);
  for (std::size_t u : targets_last_hidden) {
    if (u >= in) throw InjectionError("logit", "target unit out of range");
    out.weights[static_cast<std::size_t>(y_t) * in + u] = static_cast<Scalar>(w);
    if (!suppress_others) continue;
    for (std::size_t k = 0; k < classes; ++k) {
      if (k != static_cast<std::size_t>(y_t)) out.weights[k * in + u] = static_cast<Scalar>(-w);
    }
  }
}

}  // namespace wforge
