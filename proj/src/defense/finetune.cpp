// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <chrono>
#include <cmath>

#include "weightforge/defense.hpp"
#include "weightforge/error.hpp"
#include "weightforge/pruning.hpp"

namespace wforge {
namespace {

double elapsed(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

TrainConfig as_train_config(const FinetuneOptions& o) {
  TrainConfig c;
  c.epochs = o.epochs;
  c.batch_size = o.batch_size;
  c.lr = o.lr;
  c.momentum = o.momentum;
  c.seed = o.seed;
  c.history_samples = 256;
  return c;
}

// Fine-tunes in place, appending one sweep point per epoch. Training
// provenance is left as it was.
void run_finetune(Model& model, const Dataset& tune, const Dataset& eval,
                  const TriggerSpec& spec, const FinetuneOptions& opts,
                  std::vector<SweepPoint>& sweep) {
  if (opts.epochs == 0) return;
  const Provenance keep = model.provenance;
  train(model, tune, as_train_config(opts), [&](std::size_t e, const Model& m) {
    sweep.push_back({double(e), evaluate(m, eval), attack_success_rate(m, eval, spec)});
  });
  model.provenance = keep;
}

}  // namespace

FinetuneSplit split_for_finetune(const Dataset& test, FinetuneMode mode, double tune_fraction,
                                 std::uint64_t seed) {
  if (mode == FinetuneMode::kTestSet) return {test, test};
  if (!(tune_fraction > 0 && tune_fraction < 1)) {
    throw Error("tune_fraction must lie in (0,1)");
  }
  const Dataset shuffled = test.sample(test.size(), seed);
  const std::size_t cut = static_cast<std::size_t>(std::round(tune_fraction * double(test.size())));
  if (cut == 0 || cut == test.size()) throw Error("held-out split leaves one side empty");
  return {shuffled.slice(0, cut), shuffled.slice(cut, test.size())};
}

DefenseReport finetune_defense(Model& model, const Dataset& tune, const Dataset& eval,
                               const TriggerSpec& spec, const FinetuneOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  DefenseReport r;
  r.defense = "finetune";
  r.parameter = "epoch";
  r.seeds = {opts.seed};
  r.accuracy_before = evaluate(model, eval);
  r.asr_before = attack_success_rate(model, eval, spec);
  r.sweep.push_back({0.0, r.accuracy_before, r.asr_before});
  run_finetune(model, tune, eval, spec, opts, r.sweep);
  r.accuracy_after = r.sweep.back().accuracy;
  r.asr_after = r.sweep.back().asr;
  r.readout = r.sweep.back().value;
  r.details = {{"lr", opts.lr},
               {"momentum", opts.momentum},
               {"batch_size", opts.batch_size},
               {"tune_samples", tune.size()},
               {"eval_samples", eval.size()}};
  r.seconds = elapsed(t0);
  return r;
}

DefenseReport fineprune_defense(Model& model, const Dataset& tune, const Dataset& eval,
                                const TriggerSpec& spec, const FinepruneOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  DefenseReport r;
  r.defense = "fineprune";
  r.parameter = "pruned_channels";
  r.seeds = {opts.finetune.seed};
  r.accuracy_before = evaluate(model, eval);
  r.asr_before = attack_success_rate(model, eval, spec);
  const std::vector<std::size_t> convs = model.conv_layers();
  if (convs.empty()) {
    r.applicable = false;
    r.accuracy_after = r.accuracy_before;
    r.asr_after = r.asr_before;
    r.seconds = elapsed(t0);
    return r;
  }
  const std::size_t layer = convs.back();
  const PrunePlan plan = plan_magnitude_pruning(model, layer, tune, opts.acc_budget);
  r.sweep.push_back({0.0, r.accuracy_before, r.asr_before});
  if (opts.trajectory) {
    Model work = model;
    for (std::size_t j = 0; j < plan.pruned.size(); ++j) {
      apply_pruning(work, layer, {plan.pruned[j]});
      r.sweep.push_back(
          {double(j + 1), evaluate(work, eval), attack_success_rate(work, eval, spec)});
    }
  }
  apply_pruning(model, layer, plan.pruned);
  const double pruned_acc = evaluate(model, eval);
  const double pruned_asr = attack_success_rate(model, eval, spec);
  if (!opts.trajectory) r.sweep.push_back({double(plan.pruned.size()), pruned_acc, pruned_asr});

  std::vector<SweepPoint> tuning;
  run_finetune(model, tune, eval, spec, opts.finetune, tuning);
  r.accuracy_after = tuning.empty() ? pruned_acc : tuning.back().accuracy;
  r.asr_after = tuning.empty() ? pruned_asr : tuning.back().asr;
  r.readout = double(plan.pruned.size());
  nlohmann::json epochs = nlohmann::json::array();
  for (const SweepPoint& p : tuning) {
    epochs.push_back({{"epoch", p.value}, {"accuracy", p.accuracy}, {"asr", p.asr}});
  }
  r.details = {{"layer", layer},
               {"order", plan.order},
               {"pruned", plan.pruned},
               {"accuracy_after_pruning", pruned_acc},
               {"asr_after_pruning", pruned_asr},
               {"finetune", epochs}};
  r.seconds = elapsed(t0);
  return r;
}

}  // namespace wforge
