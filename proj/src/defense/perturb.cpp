// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <string>

#include "weightforge/defense.hpp"
#include "weightforge/error.hpp"
#include "weightforge/rng.hpp"

namespace wforge {
namespace {

double elapsed(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Calls f on every weight and, with biases, on every bias.
template <class F>
void for_each_parameter(Model& m, bool biases, F&& f) {
  for (std::size_t i = 0; i < m.num_layers(); ++i) {
    Layer& l = m.layer(i);
    if (!l.has_parameters()) continue;
    for (std::size_t j = 0; j < l.weights.size(); ++j) f(l.weights[j]);
    if (!biases) continue;
    for (std::size_t j = 0; j < l.bias.size(); ++j) f(l.bias[j]);
  }
}

void finish_readout(DefenseReport& r, double drop) {
  if (const auto at = first_drop_index(r.sweep, r.accuracy_before, drop)) {
    r.readout = r.sweep[*at].value;
    r.accuracy_after = r.sweep[*at].accuracy;
    r.asr_after = r.sweep[*at].asr;
  } else {
    r.accuracy_after = r.sweep.back().accuracy;
    r.asr_after = r.sweep.back().asr;
  }
}

}  // namespace

std::vector<double> geometric_grid(double lo, double hi, std::size_t n) {
  if (!(lo > 0 && hi > lo) || n < 2) throw Error("geometric grid needs 0 < lo < hi and n >= 2");
  std::vector<double> out(n);
  const double ratio = std::log(hi / lo) / double(n - 1);
  for (std::size_t i = 0; i < n; ++i) out[i] = lo * std::exp(ratio * double(i));
  out.back() = hi;
  return out;
}

DefenseReport noise_defense(Model& model, const Dataset& test, const TriggerSpec& spec,
                            const NoiseOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  if (opts.sigmas.empty() || opts.runs == 0) throw Error("noise sweep needs sigmas and runs");
  if (!std::is_sorted(opts.sigmas.begin(), opts.sigmas.end())) throw Error("sigmas must ascend");
  DefenseReport r;
  r.defense = "noise";
  r.parameter = "sigma";
  r.accuracy_before = evaluate(model, test);
  r.asr_before = attack_success_rate(model, test, spec);
  const Model original = model;
  for (std::size_t run = 0; run < opts.runs; ++run) {
    r.seeds.push_back(stream_seed(opts.seed, "noise-run-" + std::to_string(run)));
  }
  for (std::size_t s = 0; s < opts.sigmas.size(); ++s) {
    const double sigma = opts.sigmas[s];
    double acc = 0, acc2 = 0, asr = 0, asr2 = 0;
    for (std::size_t run = 0; run < opts.runs; ++run) {
      Rng rng(stream_seed(r.seeds[run], "sigma-" + std::to_string(s)));
      std::normal_distribution<double> noise(0.0, sigma);
      for_each_parameter(model, opts.include_biases,
                         [&](Scalar& v) { v = static_cast<Scalar>(double(v) + noise(rng)); });
      const double a = evaluate(model, test), b = attack_success_rate(model, test, spec);
      acc += a;
      acc2 += a * a;
      asr += b;
      asr2 += b * b;
      model = original;
    }
    const double n = double(opts.runs);
    acc /= n;
    asr /= n;
    r.sweep.push_back({sigma, acc, asr, std::sqrt(std::max(0.0, acc2 / n - acc * acc)),
                       std::sqrt(std::max(0.0, asr2 / n - asr * asr))});
  }
  finish_readout(r, opts.drop);
  r.details = {{"runs", opts.runs},
               {"drop", opts.drop},
               {"include_biases", opts.include_biases}, {"aggregate", "mean over runs"}};
  r.seconds = elapsed(t0);
  return r;
}

DefenseReport clip_defense(Model& model, const Dataset& test, const TriggerSpec& spec,
                           const ClipOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  if (opts.factors.empty()) throw Error("clip sweep needs factors");
  for (std::size_t i = 1; i < opts.factors.size(); ++i) {
    if (!(opts.factors[i] < opts.factors[i - 1])) throw Error("clip factors must descend");
  }
  DefenseReport r;
  r.defense = "clip";
  r.parameter = "factor";
  r.accuracy_before = evaluate(model, test);
  r.asr_before = attack_success_rate(model, test, spec);
  const Model original = model;
  double top = 0;
  for_each_parameter(model, opts.include_biases,
                     [&](Scalar& v) { top = std::max(top, std::abs(double(v))); });
  for (double f : opts.factors) {
    const double a = f * top;
    for_each_parameter(model, opts.include_biases, [&](Scalar& v) {
      v = static_cast<Scalar>(std::clamp(double(v), -a, a));
    });
    r.sweep.push_back({f, evaluate(model, test), attack_success_rate(model, test, spec)});
    model = original;
  }
  finish_readout(r, opts.drop);
  r.details = {{"max_abs_parameter", top},
               {"drop", opts.drop},
               {"include_biases", opts.include_biases}};
  r.seconds = elapsed(t0);
  return r;
}

}  // namespace wforge
