// SPDX-License-Identifier: Apache-2.0
//
// Backdoor injection by direct parameter edits: single-neuron logic gates,
// dense-layer handcrafting, conv-filter injection and trigger optimization.
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "weightforge/analysis.hpp"
#include "weightforge/data.hpp"
#include "weightforge/model.hpp"

namespace wforge {

// ---- logic gates ---------------------------------------------------------

// One ReLU neuron: out = max(0, sum_i weights[i] * x[i] + bias).
struct GateSpec {
  std::vector<double> weights;
  double bias = 0;
  double epsilon = 0;

  double eval(std::span<const double> x) const;
};

// w = -w_magnitude, b = w_magnitude: 0 -> w_magnitude, 1 -> 0.
GateSpec gate_not(double w_magnitude, double epsilon = 0.5);
// b = -max(w1,w2) - epsilon: active only on (1,1). Needs 0 < epsilon < min(w1,w2).
GateSpec gate_and(double w1, double w2, double epsilon);
// b = -min(w1,w2) + epsilon: inactive only on (0,0). Needs 0 < epsilon < min(w1,w2).
GateSpec gate_or(double w1, double w2, double epsilon);

struct ExampleBackdoorParams {
  double not_weight = 1.0;   // |w11|
  double and_weight = 1.0;   // w21 = w22
  double epsilon = 0.5;
  double amplification = 10.0;  // w31
};

// Input [2] -> Dense(2, ReLU) [not x1, x2] -> Dense(1, ReLU) [and]
// -> Dense(1) [amplify]. The single logit is positive only for (0, 1).
// Verifies its own truth table and throws InjectionError on a mismatch.
Model build_example_backdoor(const ExampleBackdoorParams& p = {});

// ---- configuration and report -------------------------------------------

struct AttackConfig {
  // Candidate search.
  std::size_t ablation_samples = 250;
  double acc_threshold = 0.0;          // dense units
  double filter_acc_threshold = 0.05;  // conv channels

  // Dense targets per hidden dense layer (in layer order); when a layer has no
  // entry, ceil(neuron_fraction * width) units are used. If
  // fewer candidates pass acc_threshold, the lowest-drop units top them up.
  std::vector<std::size_t> n_per_layer;
  double neuron_fraction = 0.1;

  // Separation step.
  std::vector<double> weight_multipliers;  // starting c_i per hidden dense layer
  double multiplier_growth = 1.5;
  std::size_t max_multiplier_steps = 40;
  bool maximize_multiplier = true;  // keep growing c_i to the cap after sep_th
  double sep_threshold = 0.999999;  // search target
  double sep_floor = 0.99;          // error if no target reaches this
  double shrink_factor = 0.5;
  std::size_t max_shrink_steps = 20;
  // Input units of a dense layer fed by conv features count as "triggered" if
  // their mean backdoor-minus-clean difference is at least this fraction of
  // the largest such difference and their own separation reaches
  // source_sep_threshold (dropped when no unit passes both).
  double feature_fraction = 0.1;
  double source_sep_threshold = 0.9;

  // Guard bias b = -max(mu + k sigma, floor_fraction * mu_backdoor).
  std::vector<double> guard_factors;  // k_i per hidden dense layer
  double guard_factor = 3.0;
  double guard_floor_fraction = 0.0;
  bool guard = true;

  // Logit step.
  std::optional<double> logit_multiplier;  // c_n; derived from the margin when unset
  double logit_margin_factor = 2.0;
  double logit_percentile = 0.99;
  bool suppress_other_logits = true;

  // Weight caps: no edit may exceed the layer's pre-attack max |w|.
  bool weight_cap = true;
  bool cap_logit_layer = true;

  // Conv injection.
  std::vector<std::size_t> filters_per_layer;  // nf_i per conv layer
  std::size_t default_filters = 2;
  double filter_multiplier_start = 0.2;
  double filter_multiplier_max = 1.0;
  double conv_sep_threshold = 0.9;
  double prune_budget = 0.03;
  std::size_t prune_retries = 25;
  bool prune_check = true;

  // Trigger optimization before weight edits.
  bool mitm = false;
  std::size_t mitm_layer = 0;
  std::size_t mitm_iters = 50;
  double mitm_step = 2.0 / 255.0;

  // Fail the run if the backdoor misses this ASR on the attacker's sample.
  double min_sample_asr = 0.9;

  std::uint64_t seed = 0;

  void validate() const;
};

struct LayerInjection {
  std::size_t layer = 0;
  std::string kind;                    // "dense" or "conv2d"
  std::size_t candidates = 0;
  std::size_t topped_up = 0;           // candidates admitted above acc_threshold
  std::vector<std::size_t> targets;    // units or channels
  std::vector<std::size_t> sources;    // input units driven by the trigger
  std::vector<double> multipliers;     // per target
  std::vector<double> separations;     // per target, after all edits
  std::vector<double> guard_biases;    // per target (dense only)
  std::vector<double> shrink_factors;  // per target; 1 = untouched
  std::size_t retries = 0;
  double weight_cap = 0;
};

struct InjectionReport {
  std::vector<LayerInjection> layers;
  int target_label = 0;
  double logit_multiplier = 0;
  std::size_t logit_layer = 0;
  double accuracy_before = 0;
  double accuracy_after = 0;
  double asr_before = 0;
  double asr_after = 0;
  double sample_asr = 0;
  bool mitm_used = false;
  double mitm_objective_before = 0;
  double mitm_objective_after = 0;
  double seconds = 0;
};

// ---- dense-layer steps --------------------------------------------------

// Incoming-weight edit for each target of dense layer `layer`: weights from
// `sources` get the sign of (backdoor - clean) mean at that source and grow
// geometrically (capped) until the target's separation reaches sep_th; then
// the target's other incoming weights shrink if still short. Throws
// InjectionError when no target reaches sep_th.
void increase_separation_fc(Model& model, std::size_t layer,
                            std::span<const std::size_t> targets,
                            std::span<const std::size_t> sources, const Tensor& clean,
                            const Tensor& backdoor, const AttackConfig& cfg,
                            LayerInjection& record, double weight_cap);

// b = -max(mean + k * std, floor). `floors` may be empty (treated as -inf).
std::vector<double> set_guard_bias(Model& model, std::size_t layer,
                                   std::span<const std::size_t> targets,
                                   std::span<const MomentPair> clean_pre_bias, double k,
                                   std::span<const double> floors = {});

// Smallest c_n with c_n * sum(mean backdoor activation of targets) >=
// margin_factor * percentile(clean max logit).
double logit_multiplier_for(const Model& model, std::span<const std::size_t> targets,
                            const Tensor& clean, const Tensor& backdoor,
                            double margin_factor, double percentile);

// Sets the output-layer weights from every target to logit y_t to c_n
// (clipped to `cap` when given) and, with suppress_others, sets the targets'
// weights into every other logit to the negated value.
void amplify_logit(Model& model, std::span<const std::size_t> targets_last_hidden,
                   int y_t, double c_n, std::optional<double> cap,
                   bool suppress_others = true);

// ---- conv steps ----------------------------------------------------------

// k x k filter holding the trigger patch (top-left aligned, cropped to k,
// padded with the patch midpoint), affinely mapped onto
// [c * w_min, c * w_max] of `host`. A constant patch maps to c * w_max.
Tensor craft_filter_from_trigger(const TriggerSpec& spec, const Layer& host, double c);

// Steps over every conv layer; fills report.layers. Throws InjectionError.
void inject_conv_filters(Model& model, const Dataset& sample, const TriggerSpec& spec,
                         const AttackConfig& cfg, InjectionReport& report);

// ---- trigger optimization ------------------------------------------------

struct MitmResult {
  TriggerSpec trigger;
  double objective_before = 0;
  double objective_after = 0;  // best seen, >= objective_before
  std::size_t iterations = 0;
  bool stagnated = false;
};

// Mean L1 distance between layer outputs of clean and triggered samples.
double mitm_objective(const Model& model, const Tensor& clean, const TriggerSpec& spec,
                      std::size_t layer);

// Signed-gradient ascent on the masked pattern, clipped to [0,1], keeping the
// best iterate.
MitmResult mitm_optimize_trigger(const Model& model, const Dataset& x,
                                 const TriggerSpec& spec, std::size_t layer,
                                 const AttackConfig& cfg);

// ---- full pipeline -------------------------------------------------------

// Conv steps (if any conv layer), then the dense steps and the logit step.
// `spec` may be replaced by its optimized version when cfg.mitm is set.
// Accuracy/ASR before and after are measured on `eval` when given, else on
// `sample`. Throws InjectionError labelled with the failing stage.
InjectionReport inject_backdoor(Model& model, const Dataset& sample, TriggerSpec& spec,
                                const AttackConfig& cfg, const Dataset* eval = nullptr);

}  // namespace wforge
