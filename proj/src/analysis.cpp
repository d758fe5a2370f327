// SPDX-License-Identifier: Apache-2.0
#include "weightforge/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "weightforge/error.hpp"
#include "weightforge/nn.hpp"

namespace wforge {
namespace {

// Zeroes the listed units of every layer the hook sees.
LayerHook zeroing_hook(const Model& model, std::span<const NeuronId> units) {
  std::vector<NeuronId> sorted(units.begin(), units.end());
  return [&model, sorted](std::size_t layer, Tensor& act) {
    const std::size_t width = model.layer_output_shape(layer).back();
    for (const NeuronId& u : sorted) {
      if (u.layer != layer) continue;
      for (std::size_t at = u.unit; at < act.size(); at += width) act[at] = 0;
    }
  };
}

double accuracy_of(const std::vector<int>& pred, const std::vector<int>& labels) {
  std::size_t ok = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) ok += pred[i] == labels[i];
  return double(ok) / double(pred.size());
}

std::vector<double> layer_drops(const Model& model, const Dataset& x, std::size_t layer) {
  const Tensor prefix = forward_to(model, x.images, layer);
  const double base =
      accuracy_of(argmax_rows(forward_range(model, prefix, layer + 1, model.num_layers() - 1)),
                  x.labels);
  const std::size_t width = model.layer_output_shape(layer).back();
  std::vector<double> out(width);
  for (std::size_t u = 0; u < width; ++u) {
    Tensor a = prefix;
    for (std::size_t at = u; at < a.size(); at += width) a[at] = 0;
    out[u] = base - accuracy_of(
        argmax_rows(forward_range(model, a, layer + 1, model.num_layers() - 1)), x.labels);
  }
  return out;
}

std::vector<NeuronId> ablate_layer(const Model& model, const Dataset& x,
                                   double acc_threshold, std::size_t layer) {
  const std::vector<double> drops = layer_drops(model, x, layer);
  std::vector<NeuronId> out;
  for (std::size_t u = 0; u < drops.size(); ++u) {
    if (drops[u] <= acc_threshold) out.push_back({layer, u});
  }
  return out;
}

Tensor layer_output(const Model& model, std::size_t layer, const Tensor& images) {
  return forward_to(model, images, layer);
}

double phi_mass(double a, double b) {
  // P(a < Z < b) for standard normal Z, computed on the tail that avoids
  // cancellation.
  if (a >= 0) return 0.5 * (std::erfc(a / std::numbers::sqrt2) - std::erfc(b / std::numbers::sqrt2));
  if (b <= 0) return 0.5 * (std::erfc(-b / std::numbers::sqrt2) - std::erfc(-a / std::numbers::sqrt2));
  return 1.0 - 0.5 * std::erfc(-a / std::numbers::sqrt2) - 0.5 * std::erfc(b / std::numbers::sqrt2);
}

double mass(double mu, double s, double lo, double hi) {
  return phi_mass((lo - mu) / s, (hi - mu) / s);
}

double log_pdf(double x, double mu, double s) {
  const double z = (x - mu) / s;
  return -0.5 * z * z - std::log(s);
}

}  // namespace

double ablated_accuracy(const Model& model, const Dataset& x,
                        std::span<const NeuronId> units) {
  return accuracy_of(predict(model, x.images, zeroing_hook(model, units)), x.labels);
}

std::vector<NeuronId> ablate_neurons(const Model& model, const Dataset& x,
                                     double acc_threshold) {
  std::vector<NeuronId> out;
  for (std::size_t layer : model.hidden_dense_layers()) {
    const auto part = ablate_layer(model, x, acc_threshold, layer);
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

std::vector<NeuronId> ablate_neurons(const Model& model, const Dataset& x,
                                     double acc_threshold, std::size_t layer) {
  const auto hidden = model.hidden_dense_layers();
  if (std::find(hidden.begin(), hidden.end(), layer) == hidden.end()) {
    throw Error("layer " + std::to_string(layer) + " is not a hidden dense layer");
  }
  return ablate_layer(model, x, acc_threshold, layer);
}

std::vector<double> ablation_drops(const Model& model, const Dataset& x, std::size_t layer) {
  const Layer& l = model.layer(layer);
  const auto hidden = model.hidden_dense_layers();
  if (l.kind != LayerKind::kConv2D &&
      std::find(hidden.begin(), hidden.end(), layer) == hidden.end()) {
    throw Error("layer " + std::to_string(layer) + " is neither conv nor hidden dense");
  }
  return layer_drops(model, x, layer);
}

std::vector<NeuronId> ablate_filters(const Model& model, const Dataset& x,
                                     double acc_threshold) {
  std::vector<NeuronId> out;
  for (std::size_t layer : model.conv_layers()) {
    const auto part = ablate_layer(model, x, acc_threshold, layer);
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

std::vector<NeuronId> ablate_filters(const Model& model, const Dataset& x,
                                     double acc_threshold, std::size_t layer) {
  if (model.layer(layer).kind != LayerKind::kConv2D) {
    throw Error("layer " + std::to_string(layer) + " is not a conv layer");
  }
  return ablate_layer(model, x, acc_threshold, layer);
}

std::vector<std::vector<double>> unit_activations(const Model& model, std::size_t layer,
                                                  std::span<const std::size_t> units,
                                                  const Tensor& images,
                                                  ChannelReduction reduction) {
  if (reduction == ChannelReduction::kPeakLocation) {
    throw Error("peak-location reduction needs a paired batch; use activation_stats");
  }
  const Tensor a = layer_output(model, layer, images);
  const std::size_t n = a.dim(0);
  const std::size_t width = model.layer_output_shape(layer).back();
  const std::size_t positions = a.size() / n / width;
  std::vector<std::vector<double>> out(n, std::vector<double>(units.size()));
  for (std::size_t s = 0; s < n; ++s) {
    const Scalar* row = a.data() + s * positions * width;
    for (std::size_t k = 0; k < units.size(); ++k) {
      if (units[k] >= width) throw Error("unit index out of range");
      double acc = reduction == ChannelReduction::kSpatialMax ? -INFINITY : 0.0;
      for (std::size_t p = 0; p < positions; ++p) {
        const double v = row[p * width + units[k]];
        acc = reduction == ChannelReduction::kSpatialMax ? std::max(acc, v) : acc + v;
      }
      out[s][k] = reduction == ChannelReduction::kSpatialMax ? acc : acc / double(positions);
    }
  }
  return out;
}

namespace {

MomentPair moments(const std::vector<double>& v) {
  double mean = 0;
  for (double x : v) mean += x;
  mean /= double(v.size());
  double var = 0;
  for (double x : v) var += (x - mean) * (x - mean);
  return {mean, std::sqrt(var / double(v.size()))};
}

}  // namespace

std::vector<ActivationStats> activation_stats(const Model& model, std::size_t layer,
                                              std::span<const std::size_t> units,
                                              const Tensor& clean, const Tensor& backdoor,
                                              ChannelReduction reduction) {
  if (clean.shape() != backdoor.shape()) throw ShapeError("clean/backdoor batches differ in shape");
  const Tensor a = layer_output(model, layer, clean);
  const Tensor b = layer_output(model, layer, backdoor);
  const std::size_t n = a.dim(0);
  const std::size_t width = model.layer_output_shape(layer).back();
  const std::size_t positions = a.size() / n / width;
  std::vector<ActivationStats> out;
  for (std::size_t u : units) {
    if (u >= width) throw Error("unit index out of range");
    std::size_t peak = 0;
    if (reduction == ChannelReduction::kPeakLocation) {
      double best = -INFINITY;
      for (std::size_t p = 0; p < positions; ++p) {
        double d = 0;
        for (std::size_t s = 0; s < n; ++s) {
          const std::size_t at = (s * positions + p) * width + u;
          d += double(b[at]) - double(a[at]);
        }
        if (d > best) {
          best = d;
          peak = p;
        }
      }
    }
    std::vector<double> vc(n), vb(n);
    for (std::size_t s = 0; s < n; ++s) {
      double c = 0, t = 0;
      if (reduction == ChannelReduction::kPeakLocation) {
        c = a[(s * positions + peak) * width + u];
        t = b[(s * positions + peak) * width + u];
      } else {
        const bool mx = reduction == ChannelReduction::kSpatialMax;
        c = mx ? -INFINITY : 0.0;
        t = c;
        for (std::size_t p = 0; p < positions; ++p) {
          const std::size_t at = (s * positions + p) * width + u;
          c = mx ? std::max(c, double(a[at])) : c + a[at];
          t = mx ? std::max(t, double(b[at])) : t + b[at];
        }
        if (!mx) {
          c /= double(positions);
          t /= double(positions);
        }
      }
      vc[s] = c;
      vb[s] = t;
    }
    const MomentPair mc = moments(vc), mb = moments(vb);
    out.push_back({{layer, u}, mc.mean, mc.std, mb.mean, mb.std});
  }
  return out;
}

std::vector<MomentPair> pre_bias_stats(const Model& model, std::size_t layer,
                                       std::span<const std::size_t> units,
                                       const Tensor& images) {
  const Layer& l = model.layer(layer);
  if (l.kind != LayerKind::kDense) throw Error("pre-bias statistics need a dense layer");
  const Tensor x = layer == 0 ? images : forward_to(model, images, layer - 1);
  const std::size_t n = x.dim(0);
  const std::size_t in = l.weights.dim(1);
  std::vector<MomentPair> out;
  std::vector<double> v(n);
  for (std::size_t u : units) {
    const Scalar* w = l.weights.data() + u * in;
    for (std::size_t s = 0; s < n; ++s) {
      const Scalar* xs = x.data() + s * in;
      double z = 0;
      for (std::size_t j = 0; j < in; ++j) z += double(w[j]) * double(xs[j]);
      v[s] = z;
    }
    out.push_back(moments(v));
  }
  return out;
}

double normal_overlap(double mu1, double s1, double mu2, double s2) {
  if (s1 < 0 || s2 < 0 || std::isnan(s1) || std::isnan(s2)) {
    throw Error("normal_overlap: sigma must be non-negative");
  }
  s1 = std::max(s1, kSigmaFloor);
  s2 = std::max(s2, kSigmaFloor);
  if (s1 == s2) {
    return std::erfc(std::abs(mu1 - mu2) / (2 * s1 * std::numbers::sqrt2));
  }
  // log pdf1 == log pdf2  <=>  A x^2 + B x + C = 0
  const double A = 1 / (s1 * s1) - 1 / (s2 * s2);
  const double B = -2 * (mu1 / (s1 * s1) - mu2 / (s2 * s2));
  const double C = mu1 * mu1 / (s1 * s1) - mu2 * mu2 / (s2 * s2) + 2 * std::log(s1 / s2);
  const double D = B * B - 4 * A * C;
  std::vector<double> cuts{-INFINITY};
  if (D > 0) {
    const double q = -0.5 * (B + std::copysign(std::sqrt(D), B));
    double r1 = q / A;
    double r2 = q != 0 ? C / q : -r1;
    if (r1 > r2) std::swap(r1, r2);
    if (std::isfinite(r1)) cuts.push_back(r1);
    if (std::isfinite(r2) && r2 != r1) cuts.push_back(r2);
  }
  cuts.push_back(INFINITY);
  double total = 0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    const double lo = cuts[i], hi = cuts[i + 1];
    double probe;
    if (std::isinf(lo) && std::isinf(hi)) probe = 0.5 * (mu1 + mu2);
    else if (std::isinf(lo)) probe = hi - 1.0 - std::abs(hi);
    else if (std::isinf(hi)) probe = lo + 1.0 + std::abs(lo);
    else probe = 0.5 * (lo + hi);
    const bool first_lower = log_pdf(probe, mu1, s1) <= log_pdf(probe, mu2, s2);
    total += first_lower ? mass(mu1, s1, lo, hi) : mass(mu2, s2, lo, hi);
  }
  return std::clamp(total, 0.0, 1.0);
}

SeparationScore separation(const ActivationStats& s) {
  const double ov = normal_overlap(s.clean_mean, s.clean_std, s.backdoor_mean, s.backdoor_std);
  return {s.neuron, ov, 1.0 - ov};
}

std::vector<SeparationScore> separations(std::span<const ActivationStats> stats) {
  std::vector<SeparationScore> out;
  out.reserve(stats.size());
  for (const ActivationStats& s : stats) out.push_back(separation(s));
  return out;
}

std::vector<NeuronId> select_target_neurons(std::span<const SeparationScore> scores,
                                            double fraction) {
  if (scores.empty()) throw Error("select_target_neurons: no scores");
  if (!(fraction > 0 && fraction <= 1)) throw Error("fraction must lie in (0,1]");
  std::vector<SeparationScore> sorted(scores.begin(), scores.end());
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const SeparationScore& a, const SeparationScore& b) {
                     if (a.separation != b.separation) return a.separation > b.separation;
                     return a.neuron < b.neuron;
                   });
  // Guard against 0.03 * 100 landing a hair above 3 in binary floating point.
  const std::size_t k = static_cast<std::size_t>(
      std::ceil(fraction * double(sorted.size()) - 1e-9));
  std::vector<NeuronId> out;
  for (std::size_t i = 0; i < std::max<std::size_t>(k, 1); ++i) out.push_back(sorted[i].neuron);
  return out;
}

}  // namespace wforge
