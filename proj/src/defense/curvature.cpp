// SPDX-License-Identifier: Apache-2.0
#include <chrono>
#include <cmath>
#include <string>

#include "weightforge/defense.hpp"
#include "weightforge/error.hpp"
#include "weightforge/hessian.hpp"
#include "weightforge/rng.hpp"

namespace wforge {

DefenseReport hessian_probe(const Model& model, const Dataset& pool, const TriggerSpec& spec,
                            const HessianProbeOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  if (opts.repeats == 0 || opts.batch == 0) throw Error("hessian probe needs repeats and batch");
  if (pool.size() < opts.batch) throw Error("pool smaller than the probe batch");
  DefenseReport r;
  r.defense = "hessian_probe";
  r.parameter = "repeat";
  nlohmann::json runs = nlohmann::json::array();
  double sc = 0, sc2 = 0, st = 0, st2 = 0;
  std::size_t converged = 0;
  for (std::size_t k = 0; k < opts.repeats; ++k) {
    const std::uint64_t seed = stream_seed(opts.seed, "hessian-repeat-" + std::to_string(k));
    r.seeds.push_back(seed);
    const Dataset clean = pool.sample(opts.batch, seed);
    const Tensor triggered = apply_trigger(clean.images, spec);
    const std::vector<int> target(clean.size(), spec.target);
    PowerIterationOptions p;
    p.iters = opts.iters;
    p.seed = seed;
    const EigenEstimate ec = top_eigenvalue(model, clean.images, clean.labels, p);
    const EigenEstimate et = top_eigenvalue(model, triggered, target, p);
    converged += ec.converged && et.converged;
    sc += ec.value;
    sc2 += ec.value * ec.value;
    st += et.value;
    st2 += et.value * et.value;
    r.sweep.push_back({double(k), ec.value, et.value});
    runs.push_back({{"clean", ec.value},
                    {"triggered", et.value},
                    {"clean_converged", ec.converged},
                    {"triggered_converged", et.converged}});
  }
  const double n = double(opts.repeats);
  const double mc = sc / n, mt = st / n;
  r.details = {{"lambda_clean", mc},
               {"lambda_clean_std", std::sqrt(std::max(0.0, sc2 / n - mc * mc))},
               {"lambda_triggered", mt},
               {"lambda_triggered_std", std::sqrt(std::max(0.0, st2 / n - mt * mt))},
               {"converged_repeats", converged},
               {"batch", opts.batch},
               {"iters", opts.iters},
               {"runs", runs},
               {"note", "sweep accuracy/asr columns hold lambda_clean/lambda_triggered"}};
  r.scores = {mc, mt};
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

}  // namespace wforge
