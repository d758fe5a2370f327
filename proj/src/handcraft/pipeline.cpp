// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <chrono>
#include <cmath>

#include "weightforge/analysis.hpp"
#include "weightforge/error.hpp"
#include "weightforge/handcraft.hpp"
#include "weightforge/nn.hpp"
#include "weightforge/zoo.hpp"

namespace wforge {

void AttackConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& what) {
    throw ConfigError("attack." + field, what);
  };
  if (!(sep_threshold > 0 && sep_threshold <= 1)) fail("sep_threshold", "must lie in (0,1]");
  if (!(sep_floor > 0 && sep_floor <= sep_threshold)) fail("sep_floor", "must lie in (0,sep_threshold]");
  if (acc_threshold < 0 || acc_threshold > 1) fail("acc_threshold", "must lie in [0,1]");
  if (filter_acc_threshold < 0 || filter_acc_threshold > 1) {
    fail("filter_acc_threshold", "must lie in [0,1]");
  }
  if (!(neuron_fraction > 0 && neuron_fraction <= 1)) fail("neuron_fraction", "must lie in (0,1]");
  if (!(multiplier_growth > 1)) fail("multiplier_growth", "must exceed 1");
  if (!(shrink_factor > 0 && shrink_factor < 1)) fail("shrink_factor", "must lie in (0,1)");
  if (guard_factor < 0) fail("guard_factor", "must be non-negative");
  for (double k : guard_factors) {
    if (k < 0) fail("guard_factors", "must be non-negative");
  }
  for (double c : weight_multipliers) {
    if (!(c > 0)) fail("weight_multipliers", "must be positive");
  }
  if (source_sep_threshold < 0 || source_sep_threshold > 1) {
    fail("source_sep_threshold", "must lie in [0,1]");
  }
  if (guard_floor_fraction < 0 || guard_floor_fraction > 1) {
    fail("guard_floor_fraction", "must lie in [0,1]");
  }
  if (logit_multiplier && !(*logit_multiplier > 0)) fail("logit_multiplier", "must be positive");
  if (!(logit_percentile > 0 && logit_percentile <= 1)) fail("logit_percentile", "must lie in (0,1]");
  if (!(filter_multiplier_max > 0 && filter_multiplier_max <= 1)) {
    fail("filter_multiplier_max", "must lie in (0,1]");
  }
  if (!(filter_multiplier_start > 0)) fail("filter_multiplier_start", "must be positive");
  if (prune_budget < 0 || prune_budget > 1) fail("prune_budget", "must lie in [0,1]");
  if (mitm && mitm_iters == 0) fail("mitm_iters", "must be at least 1");
  if (!(mitm_step > 0)) fail("mitm_step", "must be positive");
  if (ablation_samples == 0) fail("ablation_samples", "must be positive");
}

namespace {

// Input units of dense layer `layer` that the trigger moves, when that layer
// is not fed by another handcrafted dense layer.
std::vector<std::size_t> trigger_sources(const Model& model, std::size_t layer,
                                         const TriggerSpec& spec, const Tensor& clean,
                                         const Tensor& backdoor, double fraction,
                                         double min_sep) {
  std::vector<std::size_t> out;
  if (layer == 0) {
    const std::size_t c = spec.pattern.dim(2);
    for (std::size_t p = 0; p < spec.mask.size(); ++p) {
      if (spec.mask[p] == Scalar(0)) continue;
      for (std::size_t ch = 0; ch < c; ++ch) out.push_back(p * c + ch);
    }
    return out;
  }
  const Tensor a = forward_to(model, clean, layer - 1);
  const Tensor b = forward_to(model, backdoor, layer - 1);
  const std::size_t n = a.dim(0), in = a.size() / n;
  std::vector<double> diff(in, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) diff[i % in] += double(b[i]) - double(a[i]);
  const double top = *std::max_element(diff.begin(), diff.end());
  if (!(top > 0)) return out;
  std::vector<std::size_t> loose;
  for (std::size_t j = 0; j < in; ++j) {
    if (diff[j] < fraction * top) continue;
    loose.push_back(j);
    double sa = 0, sa2 = 0, sb = 0, sb2 = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double u = a[i * in + j], v = b[i * in + j];
      sa += u;
      sa2 += u * u;
      sb += v;
      sb2 += v * v;
    }
    const double ma = sa / double(n), mb = sb / double(n);
    const double va = std::sqrt(std::max(0.0, sa2 / double(n) - ma * ma));
    const double vb = std::sqrt(std::max(0.0, sb2 / double(n) - mb * mb));
    if (1.0 - normal_overlap(ma, va, mb, vb) >= min_sep) out.push_back(j);
  }
  return out.empty() ? loose : out;
}

template <class F>
auto staged(const std::string& stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const InjectionError&) {
    throw;
  } catch (const std::exception& e) {
    throw InjectionError(stage, e.what());
  }
}

}  // namespace

InjectionReport inject_backdoor(Model& model, const Dataset& sample, TriggerSpec& spec,
                                const AttackConfig& cfg, const Dataset* eval) {
  const auto t0 = std::chrono::steady_clock::now();
  staged("config", [&] {
    cfg.validate();
    spec.validate();
  });
  if (sample.size() < 50) {
    throw InjectionError("config", "needs at least 50 samples, got " + std::to_string(sample.size()));
  }
  if (spec.target < 0 || static_cast<std::size_t>(spec.target) >= model.num_classes()) {
    throw InjectionError("config", "target label outside the model's classes");
  }
  const Model original = model;
  const Dataset& eval_set = eval != nullptr ? *eval : sample;
  const Dataset x = sample.slice(0, std::min(sample.size(), cfg.ablation_samples));

  InjectionReport report;
  report.target_label = spec.target;
  report.accuracy_before = evaluate(model, eval_set);
  report.asr_before = attack_success_rate(model, eval_set, spec);

  if (cfg.mitm) {
    const MitmResult r =
        staged("mitm", [&] { return mitm_optimize_trigger(model, x, spec, cfg.mitm_layer, cfg); });
    spec = r.trigger;
    report.mitm_used = true;
    report.mitm_objective_before = r.objective_before;
    report.mitm_objective_after = r.objective_after;
  }

  if (!model.conv_layers().empty()) {
    staged("conv", [&] { inject_conv_filters(model, x, spec, cfg, report); });
  }

  const Tensor& clean = x.images;
  const Tensor backdoor = apply_trigger(clean, spec);
  const std::vector<std::size_t> hidden = model.hidden_dense_layers();
  if (hidden.empty()) throw InjectionError("dense", "model has no hidden dense layer");
  std::vector<std::size_t> sources;
  std::vector<std::size_t> targets;
  for (std::size_t h = 0; h < hidden.size(); ++h) {
    const std::size_t layer = hidden[h];
    LayerInjection rec;
    rec.layer = layer;
    rec.kind = "dense";
    rec.weight_cap = original.layer(layer).weights.max_abs();
    if (h == 0 || hidden[h - 1] + 1 != layer) {
      sources = trigger_sources(model, layer, spec, clean, backdoor, cfg.feature_fraction,
                                cfg.source_sep_threshold);
    } else {
      sources = targets;
    }
    if (sources.empty()) {
      throw InjectionError("separation", "trigger does not reach layer " + std::to_string(layer));
    }
    rec.sources = sources;

    const std::size_t width = model.layer_output_shape(layer).back();
    const std::size_t want =
        h < cfg.n_per_layer.size()
            ? cfg.n_per_layer[h]
            : static_cast<std::size_t>(std::ceil(cfg.neuron_fraction * double(width) - 1e-9));
    const std::vector<double> drops =
        staged("candidates", [&] { return ablation_drops(model, x, layer); });
    std::vector<std::size_t> units;
    for (std::size_t u = 0; u < width; ++u) {
      if (drops[u] <= cfg.acc_threshold) units.push_back(u);
    }
    rec.candidates = units.size();
    if (units.size() < want) {
      std::vector<std::size_t> rest;
      for (std::size_t u = 0; u < width; ++u) {
        if (drops[u] > cfg.acc_threshold) rest.push_back(u);
      }
      std::stable_sort(rest.begin(), rest.end(),
                       [&](std::size_t a, std::size_t b) { return drops[a] < drops[b]; });
      rest.resize(std::min(rest.size(), want - units.size()));
      rec.topped_up = rest.size();
      units.insert(units.end(), rest.begin(), rest.end());
      std::sort(units.begin(), units.end());
    }
    if (units.empty()) {
      throw InjectionError("candidates", "no ablatable neuron in layer " + std::to_string(layer));
    }
    const std::vector<SeparationScore> scores =
        separations(activation_stats(model, layer, units, clean, backdoor));
    const double frac = std::min(1.0, double(std::max<std::size_t>(want, 1)) / double(scores.size()));
    targets.clear();
    for (const NeuronId& id : select_target_neurons(scores, frac)) targets.push_back(id.unit);
    if (targets.size() > want && want > 0) targets.resize(want);
    std::sort(targets.begin(), targets.end());
    rec.targets = targets;

    staged("separation", [&] {
      increase_separation_fc(model, layer, targets, sources, clean, backdoor, cfg, rec,
                             rec.weight_cap);
    });

    if (cfg.guard) {
      const double k = h < cfg.guard_factors.size() ? cfg.guard_factors[h] : cfg.guard_factor;
      const std::vector<MomentPair> pre = pre_bias_stats(model, layer, targets, clean);
      std::vector<double> floors;
      if (cfg.guard_floor_fraction > 0) {
        for (const MomentPair& m : pre_bias_stats(model, layer, targets, backdoor)) {
          floors.push_back(cfg.guard_floor_fraction * m.mean);
        }
      }

      rec.guard_biases = set_guard_bias(model, layer, targets, pre, k, floors);
    }
    for (const SeparationScore& s :
         separations(activation_stats(model, layer, targets, clean, backdoor))) {
      rec.separations.push_back(s.separation);
    }
    report.layers.push_back(std::move(rec));
  }

  const std::size_t last_hidden = model.num_layers() - 2;
  if (hidden.back() != last_hidden) {
    throw InjectionError("logit", "the output layer is not fed by a hidden dense layer");
  }
  report.logit_layer = model.num_layers() - 1;
  const double c_n = cfg.logit_multiplier
                         ? *cfg.logit_multiplier
                         : staged("logit", [&] {
                             return logit_multiplier_for(model, targets, clean, backdoor,
                                                         cfg.logit_margin_factor,
                                                         cfg.logit_percentile);
                           });
  std::optional<double> cap;
  if (cfg.weight_cap && cfg.cap_logit_layer) {
    cap = original.layer(report.logit_layer).weights.max_abs();
  }
  amplify_logit(model, targets, spec.target, c_n, cap, cfg.suppress_other_logits);
  report.logit_multiplier = cap ? std::min(c_n, *cap) : c_n;

  report.sample_asr = attack_success_rate(model, x, spec);
  if (report.sample_asr < cfg.min_sample_asr) {
    throw InjectionError("logit", "backdoor reaches only " + std::to_string(report.sample_asr) +
                                      " ASR on the attacker's samples; raise n_i or lift the "
                                      "logit-layer cap");
  }
  if (!same_architecture(original, model)) {
    throw InjectionError("internal", "architecture changed during injection");
  }
  report.accuracy_after = evaluate(model, eval_set);
  report.asr_after = attack_success_rate(model, eval_set, spec);
  model.provenance.attack_lineage.push_back("handcraft:" + to_string(spec.kind) + ":" +
                                            std::to_string(spec.size) + "x" +
                                            std::to_string(spec.size) + ":y" +
                                            std::to_string(spec.target));
  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

}  // namespace wforge
