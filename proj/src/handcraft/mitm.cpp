// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>

#include "weightforge/error.hpp"
#include "weightforge/handcraft.hpp"
#include "weightforge/nn.hpp"

namespace wforge {

double mitm_objective(const Model& model, const Tensor& clean, const TriggerSpec& spec,
                      std::size_t layer) {
  const Tensor a = forward_to(model, clean, layer);
  const Tensor b = forward_to(model, apply_trigger(clean, spec), layer);
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(double(b[i]) - double(a[i]));
  return s / double(a.dim(0));
}

MitmResult mitm_optimize_trigger(const Model& model, const Dataset& x,
                                 const TriggerSpec& spec, std::size_t layer,
                                 const AttackConfig& cfg) {
  if (layer >= model.num_layers()) throw InjectionError("mitm", "layer index out of range");
  if (cfg.mitm_iters == 0) throw InjectionError("mitm", "needs at least one iteration");
  const Tensor& clean = x.images;
  const std::size_t n = clean.dim(0);
  const Tensor base = forward_to(model, clean, layer);
  const std::size_t pixels = spec.mask.size();
  const std::size_t ch = spec.pattern.dim(2);

  MitmResult r;
  r.trigger = spec;
  r.trigger.kind = TriggerKind::kCustom;
  r.objective_before = mitm_objective(model, clean, spec, layer);
  r.objective_after = r.objective_before;
  TriggerSpec cur = r.trigger;
  std::size_t flat = 0;
  for (std::size_t it = 0; it < cfg.mitm_iters; ++it) {
    const Tensor xb = apply_trigger(clean, cur);
    const ForwardTrace tr = forward(model, xb);
    const Tensor& act = tr.activations[layer];
    Tensor seed(act.shape());
    for (std::size_t i = 0; i < act.size(); ++i) {
      const double d = double(act[i]) - double(base[i]);
      seed[i] = static_cast<Scalar>(d > 0 ? 1.0 / double(n) : (d < 0 ? -1.0 / double(n) : 0.0));
    }
    const Gradients g =
        backpropagate(model, xb, tr, layer, seed, {.parameters = false, .input = true});
    bool any = false;
    for (std::size_t p = 0; p < pixels; ++p) {
      if (spec.mask[p] == Scalar(0)) continue;
      for (std::size_t c = 0; c < ch; ++c) {
        double gsum = 0;
        for (std::size_t s = 0; s < n; ++s) gsum += g.input[(s * pixels + p) * ch + c];
        if (gsum == 0) continue;
        any = true;
        Scalar& v = cur.pattern[p * ch + c];
        v = std::clamp(static_cast<Scalar>(v + (gsum > 0 ? 1 : -1) * cfg.mitm_step), Scalar(0),
                       Scalar(1));
      }
    }
    r.iterations = it + 1;
    flat = any ? 0 : flat + 1;
    if (flat >= 5) {
      r.stagnated = true;
      break;
    }
    const double obj = mitm_objective(model, clean, cur, layer);
    if (obj > r.objective_after) {
      r.objective_after = obj;
      r.trigger = cur;
    }
  }
  return r;
}

}  // namespace wforge
