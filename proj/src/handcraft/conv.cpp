// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>

#include "weightforge/error.hpp"
#include "weightforge/handcraft.hpp"
#include "weightforge/nn.hpp"
#include "weightforge/pruning.hpp"

namespace wforge {

Tensor craft_filter_from_trigger(const TriggerSpec& spec, const Layer& host, double c) {
  if (host.kind != LayerKind::kConv2D) throw InjectionError("conv", "host layer is not conv2d");
  if (c < 0 || c > 1) throw InjectionError("conv", "filter multiplier must lie in [0,1]");
  const std::size_t k = host.weights.dim(2);
  const std::size_t w = spec.pattern.dim(1), ch = spec.pattern.dim(2);
  const std::size_t span = std::min(k, spec.size);
  std::vector<double> patch;
  for (std::size_t y = 0; y < span; ++y) {
    for (std::size_t x = 0; x < span; ++x) {
      patch.push_back(spec.pattern[((spec.row + y) * w + spec.col + x) * ch]);
    }
  }
  const auto [lo_it, hi_it] = std::minmax_element(patch.begin(), patch.end());
  const double lo = *lo_it, hi = *hi_it;
  const double mid = 0.5 * (lo + hi);
  const auto [wlo_it, whi_it] =
      std::minmax_element(host.weights.values().begin(), host.weights.values().end());
  const double wmin = *wlo_it, wmax = *whi_it;
  Tensor f({k, k});
  for (std::size_t y = 0; y < k; ++y) {
    for (std::size_t x = 0; x < k; ++x) {
      const double p = (y < span && x < span) ? patch[y * span + x] : mid;
      const double v = hi == lo ? c * wmax : c * (wmin + (p - lo) / (hi - lo) * (wmax - wmin));
      f[y * k + x] = static_cast<Scalar>(v);
    }
  }
  return f;
}

namespace {

struct Candidate {
  std::size_t channel;
  double magnitude;
};

// k x k crops (one per previous injected channel) of the mean feature-map
// difference, centred on the position where the summed difference peaks.
std::vector<std::vector<double>> difference_patterns(const Model& model, std::size_t layer,
                                                     const Tensor& clean,
                                                     const Tensor& backdoor,
                                                     const std::vector<std::size_t>& channels,
                                                     std::size_t k) {
  const Tensor a = forward_to(model, clean, layer - 1);
  const Tensor b = forward_to(model, backdoor, layer - 1);
  const Shape& s = model.layer_input_shape(layer);
  const std::size_t h = s[0], w = s[1], c = s[2], n = a.dim(0);
  std::vector<std::vector<double>> diff(channels.size(), std::vector<double>(h * w, 0.0));
  std::vector<double> total(h * w, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < h * w; ++p) {
      for (std::size_t j = 0; j < channels.size(); ++j) {
        const std::size_t at = (i * h * w + p) * c + channels[j];
        const double d = (double(b[at]) - double(a[at])) / double(n);
        diff[j][p] += d;
        total[p] += d;
      }
    }
  }
  const std::size_t peak = static_cast<std::size_t>(
      std::max_element(total.begin(), total.end()) - total.begin());
  const std::size_t py = peak / w, px = peak % w;
  const std::size_t y0 = std::min(h - k, py >= k / 2 ? py - k / 2 : 0);
  const std::size_t x0 = std::min(w - k, px >= k / 2 ? px - k / 2 : 0);
  std::vector<std::vector<double>> out(channels.size(), std::vector<double>(k * k));
  for (std::size_t j = 0; j < channels.size(); ++j) {
    for (std::size_t y = 0; y < k; ++y) {
      for (std::size_t x = 0; x < k; ++x) out[j][y * k + x] = diff[j][(y0 + y) * w + x0 + x];
    }
  }
  return out;
}

// Writes the handcrafted slices at multiplier c into `chosen` filters.
void write_filters(Model& work, const Model& base, std::size_t layer, bool first,
                   const std::vector<std::size_t>& chosen, const TriggerSpec& spec,
                   const std::vector<std::size_t>& prev_channels,
                   const std::vector<std::vector<double>>& patterns, double c) {
  Layer& l = work.layer(layer);
  const Layer& host = base.layer(layer);
  const std::size_t cin = l.weights.dim(1), k = l.weights.dim(2);
  if (first) {
    const Tensor f = craft_filter_from_trigger(spec, host, c);
    for (std::size_t ch : chosen) {
      std::copy_n(f.data(), k * k, l.weights.data() + (ch * cin + 0) * k * k);
    }
    return;
  }
  double peak = 0;
  for (const auto& p : patterns) {
    for (double v : p) peak = std::max(peak, std::abs(v));
  }
  const double scale = peak > 0 ? c * host.weights.max_abs() / peak : 0.0;
  for (std::size_t ch : chosen) {
    for (std::size_t j = 0; j < prev_channels.size(); ++j) {
      Scalar* dst = l.weights.data() + (ch * cin + prev_channels[j]) * k * k;
      for (std::size_t q = 0; q < k * k; ++q) dst[q] = static_cast<Scalar>(scale * patterns[j][q]);
    }
  }
}

}  // namespace

void inject_conv_filters(Model& model, const Dataset& sample, const TriggerSpec& spec,
                         const AttackConfig& cfg, InjectionReport& report) {
  const std::vector<std::size_t> convs = model.conv_layers();
  if (convs.empty()) throw InjectionError("conv", "model has no conv layers");
  const Dataset x = sample.slice(0, std::min(sample.size(), cfg.ablation_samples));
  const Tensor& clean = x.images;
  const Tensor backdoor = apply_trigger(clean, spec);
  std::vector<std::size_t> prev;
  for (std::size_t li = 0; li < convs.size(); ++li) {
    const std::size_t layer = convs[li];
    const std::size_t nf =
        li < cfg.filters_per_layer.size() ? cfg.filters_per_layer[li] : cfg.default_filters;
    if (nf == 0) break;
    const std::vector<NeuronId> cand_ids =
        ablate_filters(model, x, cfg.filter_acc_threshold, layer);
    const std::vector<double> mags = channel_activation_magnitudes(model, layer, clean);
    std::vector<Candidate> cands;
    for (const NeuronId& id : cand_ids) cands.push_back({id.unit, mags[id.unit]});
    std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
      return a.magnitude > b.magnitude;
    });
    if (cands.size() < nf) {
      throw InjectionError("conv", "layer " + std::to_string(layer) + " has only " +
                                       std::to_string(cands.size()) + " candidate filters");
    }
    std::vector<std::vector<double>> patterns;
    if (li > 0) {
      patterns = difference_patterns(model, layer, clean, backdoor, prev,
                                     model.layer(layer).weights.dim(2));
    }

    LayerInjection rec;
    rec.layer = layer;
    rec.kind = "conv2d";
    rec.candidates = cands.size();
    rec.weight_cap = model.layer(layer).weights.max_abs();
    std::vector<bool> rejected(cands.size(), false);
    bool accepted = false;
    std::vector<std::size_t> last;
    double c = 0;
    for (std::size_t attempt = 0; attempt <= cfg.prune_retries; ++attempt) {
      std::vector<std::size_t> chosen;
      for (std::size_t i = 0; i < cands.size() && chosen.size() < nf; ++i) {
        if (!rejected[i]) chosen.push_back(cands[i].channel);
      }
      if (chosen.size() < nf) break;
      // A pruned set first gets a larger multiplier; new channels start over.
      const bool escalate = chosen == last;
      if (!escalate) c = std::min(cfg.filter_multiplier_start, cfg.filter_multiplier_max);
      last = chosen;
      Model work = model;
      std::vector<ActivationStats> st;
      double min_sep = 0;
      while (true) {
        write_filters(work, model, layer, li == 0, chosen, spec, prev, patterns, c);
        st = activation_stats(work, layer, chosen, clean, backdoor,
                              ChannelReduction::kPeakLocation);
        min_sep = 1.0;
        for (const auto& s : st) min_sep = std::min(min_sep, separation(s).separation);
        if (escalate || min_sep >= cfg.conv_sep_threshold || c >= cfg.filter_multiplier_max) break;
        c = std::min(c * cfg.multiplier_growth, cfg.filter_multiplier_max);
      }
      if (cfg.prune_check) {
        const PrunePlan plan = plan_magnitude_pruning(work, layer, x, cfg.prune_budget);
        bool hit = false;
        for (std::size_t i = 0; i < cands.size(); ++i) {
          if (rejected[i]) continue;
          const bool in_chosen =
              std::find(chosen.begin(), chosen.end(), cands[i].channel) != chosen.end();
          const bool pruned = std::find(plan.pruned.begin(), plan.pruned.end(),
                                        cands[i].channel) != plan.pruned.end();
          if (in_chosen && pruned) {
            hit = true;
            if (c >= cfg.filter_multiplier_max) rejected[i] = true;
          }
        }
        if (hit) {
          ++rec.retries;
          if (c < cfg.filter_multiplier_max) {
            c = std::min(c * cfg.multiplier_growth, cfg.filter_multiplier_max);
          }
          continue;
        }
      }
      model = std::move(work);
      rec.targets = chosen;
      rec.multipliers.assign(chosen.size(), c);
      for (const auto& s : st) rec.separations.push_back(separation(s).separation);
      accepted = true;
      break;
    }
    if (!accepted) {
      throw InjectionError("conv-prune", "layer " + std::to_string(layer) +
                                             ": injected filters kept getting pruned after " +
                                             std::to_string(rec.retries) + " retries");
    }
    prev = rec.targets;
    report.layers.push_back(std::move(rec));
  }
}

}  // namespace wforge
