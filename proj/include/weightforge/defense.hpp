// SPDX-License-Identifier: Apache-2.0
//
// Defenses and detectors run against (possibly) backdoored models. Every
// entry point produces a DefenseReport; sweep defenses leave the model
// bit-identical on return.
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "weightforge/data.hpp"
#include "weightforge/model.hpp"
#include "weightforge/zoo.hpp"

namespace wforge {

inline constexpr int kDefenseSchemaVersion = 1;

struct SweepPoint {
  double value = 0;
  double accuracy = 0;
  double asr = 0;
  double accuracy_std = 0;  // across runs, when the point is averaged
  double asr_std = 0;
};

struct DefenseReport {
  std::string defense;
  std::string parameter;  // name of the swept quantity, empty if none
  std::vector<SweepPoint> sweep;
  double accuracy_before = 0;
  double asr_before = 0;
  double accuracy_after = 0;  // at the readout point
  double asr_after = 0;
  std::optional<double> readout;  // sweep value used for *_after
  bool applicable = true;
  std::optional<bool> detected;
  std::vector<double> scores;  // anomaly indices, KS distances, ...
  std::vector<std::uint64_t> seeds;
  nlohmann::json details = nlohmann::json::object();
  double seconds = 0;  // wall clock; excluded from determinism checks
};

nlohmann::json to_json(const DefenseReport& r);
// Inverse of to_json. Throws ParseError on a schema mismatch.
DefenseReport defense_report_from_json(const nlohmann::json& j);

// First sweep index whose accuracy is at least `drop` below `base`.
std::optional<std::size_t> first_drop_index(const std::vector<SweepPoint>& sweep, double base,
                                            double drop);

// ---- fine-tuning ----------------------------------------------------------

enum class FinetuneMode {
  kHeldOut,  // tune on one part of the clean pool, measure on the rest
  kTestSet,  // tune and measure on the whole test set
};

struct FinetuneSplit {
  Dataset tune;
  Dataset eval;
};

// kHeldOut shuffles `test` with `seed` and puts tune_fraction of it in tune.
FinetuneSplit split_for_finetune(const Dataset& test, FinetuneMode mode,
                                 double tune_fraction = 0.5, std::uint64_t seed = 0);

struct FinetuneOptions {
  std::size_t epochs = 5;
  std::size_t batch_size = 64;
  double lr = 0.01;
  double momentum = 0.9;
  std::uint64_t seed = 0;
};

// Resumes SGD on `tune`; reports accuracy/ASR on `eval` after every epoch.
DefenseReport finetune_defense(Model& model, const Dataset& tune, const Dataset& eval,
                               const TriggerSpec& spec, const FinetuneOptions& opts);

// ---- fine-pruning ---------------------------------------------------------

struct FinepruneOptions {
  double acc_budget = 0.05;
  FinetuneOptions finetune;  // epochs = 0 skips the fine-tuning stage
  bool trajectory = true;    // record ASR after every removed channel
};

// Prunes the last conv layer by ascending clean activation (decided on
// `tune`), then fine-tunes on `tune`. A model without conv layers yields an
// inapplicable report and is left alone.
DefenseReport fineprune_defense(Model& model, const Dataset& tune, const Dataset& eval,
                                const TriggerSpec& spec, const FinepruneOptions& opts);

// ---- parameter perturbation -----------------------------------------------

// n points from lo to hi, equally spaced in log space.
std::vector<double> geometric_grid(double lo, double hi, std::size_t n);

struct NoiseOptions {
  std::vector<double> sigmas = geometric_grid(0.01, 5.0, 40);
  std::size_t runs = 5;
  double drop = 0.05;
  bool include_biases = false;
  std::uint64_t seed = 0;
};

// Adds N(0, sigma^2) to every weight (and bias, unless include_biases is
// off), measures, restores.
// Points are means over runs; the readout is the first sigma whose mean
// accuracy drops by `drop`.
DefenseReport noise_defense(Model& model, const Dataset& test, const TriggerSpec& spec,
                            const NoiseOptions& opts);

struct ClipOptions {
  std::vector<double> factors = {1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1};
  double drop = 0.05;
  bool include_biases = false;
};

// Clips every parameter to [-a, a], a = factor * (global max |parameter|),
// measures, restores. include_biases = false restricts both to weights.
DefenseReport clip_defense(Model& model, const Dataset& test, const TriggerSpec& spec,
                           const ClipOptions& opts);

// ---- weight statistics ----------------------------------------------------

// Two-sided KS statistic of `sample` against N(mean, std^2).
double ks_normal(std::vector<double> sample, double mean, double std);
// Two-sample KS statistic.
double ks_two_sample(std::vector<double> a, std::vector<double> b);

struct WeightStatsOptions {
  double threshold = 0.05;
  std::size_t bins = 50;
};

// Per layer: histogram, fitted Gaussian, KS distance to the fit and, with a
// reference, to the reference layer. Flagged iff any distance exceeds the
// threshold.
DefenseReport weight_stats_report(const Model& model, const Model* reference,
                                  const WeightStatsOptions& opts);

// ---- trigger reverse engineering ------------------------------------------

struct CleanseOptions {
  std::size_t iters = 1000;
  std::size_t batch_size = 32;
  double lr = 0.1;              // Adam step on the mask/pattern logits
  double lambda_init = 1e-3;    // weight of |mask|_1
  double lambda_up = 1.5;       // applied when the reversed trigger works
  double lambda_down = 1.5 * 1.2247448713915890;  // 1.5^1.5
  std::size_t patience = 10;    // steps between lambda updates
  double success_gate = 0.99;
  double mad_constant = 1.4826;
  double threshold = 2.0;
  bool below_median_only = true;  // only unusually small masks count
  std::uint64_t seed = 0;
};

struct ReversedTrigger {
  int label = 0;
  double mask_l1 = 0;
  double success = 0;  // on the optimisation sample
  bool analyzable = true;
  Tensor mask;     // [H,W,1]
  Tensor pattern;  // [H,W,C]
};

// Optimises a mask/pattern pair per class.
std::vector<ReversedTrigger> reverse_triggers(const Model& model, const Dataset& sample,
                                              const CleanseOptions& opts);
// |x - median| / (c * MAD) for every entry; a zero MAD maps non-median
// entries to +inf.
std::vector<double> mad_anomaly_indices(const std::vector<double>& values, double c);

DefenseReport neural_cleanse_lite(const Model& model, const Dataset& sample,
                                  const CleanseOptions& opts);

// ---- adversarial examples -------------------------------------------------

enum class Norm { kL2, kLinf };

struct AdvConfig {
  Norm norm = Norm::kL2;
  std::size_t steps = 100;
  std::optional<double> step_size;  // default 2.5 eps / steps (L2), eps / 4 (Linf)
  double epsilon = 3.0;
  bool random_start = false;
  std::uint64_t seed = 0;

  double step() const;
  void validate() const;
  static AdvConfig l2(std::size_t steps = 100, double eps = 3.0);
  static AdvConfig linf(std::size_t steps = 10, double eps = 8.0 / 255.0);
};

// PGD in [0,1] pixel space. Targeted runs descend the loss of `labels`;
// untargeted runs ascend it.
Tensor pgd(const Model& model, const Tensor& images, std::span<const int> labels,
           const AdvConfig& cfg, bool targeted);

struct ReconstructOptions {
  AdvConfig adv = AdvConfig::l2();
  std::size_t samples = 16;
};

// Targeted PGD toward spec.target on `sample`; the trigger-box crop of every
// perturbed image is stamped onto `test` and its success rate reported.
DefenseReport reconstruct_triggers(const Model& model, const Dataset& sample,
                                   const Dataset& test, const TriggerSpec& spec,
                                   const ReconstructOptions& opts);

// Untargeted PGD over `test`; histogram of predicted classes among the
// misclassified, bias = share(target) - 1/K.
DefenseReport misclassification_bias(const Model& model, const Dataset& test, int target,
                                     const AdvConfig& adv);

// ---- curvature ------------------------------------------------------------

struct HessianProbeOptions {
  std::size_t batch = 128;
  std::size_t repeats = 20;
  std::size_t iters = 20;
  std::uint64_t seed = 0;
};

// Top loss-Hessian eigenvalue on fresh clean batches (true labels) and on
// their triggered copies (labelled spec.target), mean and std over repeats.
DefenseReport hessian_probe(const Model& model, const Dataset& pool, const TriggerSpec& spec,
                            const HessianProbeOptions& opts);

}  // namespace wforge
