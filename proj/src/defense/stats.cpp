// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>

#include "weightforge/defense.hpp"
#include "weightforge/error.hpp"

namespace wforge {

double ks_normal(std::vector<double> sample, double mean, double std) {
  if (sample.empty()) throw Error("KS statistic of an empty sample");
  if (!(std > 0)) throw Error("KS against a degenerate normal");
  std::sort(sample.begin(), sample.end());
  const double n = double(sample.size());
  double d = 0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double cdf = 0.5 * std::erfc(-(sample[i] - mean) / (std * std::numbers::sqrt2));
    d = std::max({d, double(i + 1) / n - cdf, cdf - double(i) / n});
  }
  return d;
}

double ks_two_sample(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw Error("KS statistic of an empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = double(a.size()), nb = double(b.size());
  std::size_t i = 0, j = 0;
  double d = 0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(double(i) / na - double(j) / nb));
  }
  return d;
}

DefenseReport weight_stats_report(const Model& model, const Model* reference,
                                  const WeightStatsOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  if (reference != nullptr && !same_architecture(model, *reference)) {
    throw Error("reference model has a different architecture");
  }
  DefenseReport r;
  r.defense = "weight_stats";
  r.parameter = "layer";
  nlohmann::json layers = nlohmann::json::array();
  bool flagged = false;
  for (std::size_t i = 0; i < model.num_layers(); ++i) {
    const Layer& l = model.layer(i);
    if (!l.has_parameters()) continue;
    const std::vector<double> w(l.weights.values().begin(), l.weights.values().end());
    double mean = 0;
    for (double v : w) mean += v;
    mean /= double(w.size());
    double var = 0;
    for (double v : w) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / double(w.size()));
    const double ks = sd > 0 ? ks_normal(w, mean, sd) : 1.0;
    const auto [lo_it, hi_it] = std::minmax_element(w.begin(), w.end());
    const double lo = *lo_it, hi = *hi_it;
    std::vector<std::size_t> hist(opts.bins, 0);
    for (double v : w) {
      const std::size_t b =
          hi > lo ? std::min(opts.bins - 1, std::size_t((v - lo) / (hi - lo) * double(opts.bins)))
                  : 0;
      ++hist[b];
    }
    nlohmann::json entry = {{"layer", i}, {"mean", mean},   {"std", sd},
                            {"ks", ks},   {"min", lo},      {"max", hi},
                            {"histogram", hist}};
    double worst = ks;
    if (reference != nullptr) {
      const Tensor& rw = reference->layer(i).weights;
      const double ks_ref = ks_two_sample(w, {rw.values().begin(), rw.values().end()});
      entry["ks_reference"] = ks_ref;
      worst = std::max(worst, ks_ref);
    }
    flagged = flagged || worst > opts.threshold;
    r.scores.push_back(worst);
    layers.push_back(entry);
  }
  r.detected = flagged;
  r.details = {{"threshold", opts.threshold}, {"layers", layers}};
  r.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

}  // namespace wforge
