// SPDX-License-Identifier: Apache-2.0
//
// Reference computations that share no code with the library: numerical
// integration for the Gaussian overlap and a double-precision forward pass for
// finite-difference gradients.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

#include "weightforge/model.hpp"
#include "weightforge/tensor.hpp"

namespace wforge::oracle {

inline double normal_pdf(double x, double mu, double s) {
  const double z = (x - mu) / s;
  return std::exp(-0.5 * z * z) / (s * std::sqrt(2 * std::numbers::pi));
}

template <class F>
double adaptive_simpson(const F& f, double a, double b, double fa, double fm, double fb,
                        double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6 * (fa + 4 * flm + fm);
  const double right = (b - m) / 6 * (fm + 4 * frm + fb);
  const double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15 * tol) return left + right + delta / 15;
  return adaptive_simpson(f, a, m, fa, flm, fm, left, tol / 2, depth - 1) +
         adaptive_simpson(f, m, b, fm, frm, fb, right, tol / 2, depth - 1);
}

template <class F>
double integrate(const F& f, double a, double b, double tol) {
  const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  return adaptive_simpson(f, a, b, fa, fm, fb, (b - a) / 6 * (fa + 4 * fm + fb), tol, 50);
}

// Integral of min(pdf1, pdf2), split into pieces narrow relative to the
// smaller sigma so no peak falls between samples.
inline double overlap_by_integration(double mu1, double s1, double mu2, double s2) {
  const double lo = std::min(mu1 - 12 * s1, mu2 - 12 * s2);
  const double hi = std::max(mu1 + 12 * s1, mu2 + 12 * s2);
  const double piece = std::min(s1, s2) / 4;
  const auto pieces = static_cast<std::size_t>(std::ceil((hi - lo) / piece));
  const auto f = [&](double x) { return std::min(normal_pdf(x, mu1, s1), normal_pdf(x, mu2, s2)); };
  double total = 0;
  for (std::size_t i = 0; i < pieces; ++i) {
    const double a = lo + (hi - lo) * double(i) / double(pieces);
    const double b = lo + (hi - lo) * double(i + 1) / double(pieces);
    total += integrate(f, a, b, 1e-12 / double(pieces));
  }
  return total;
}

// Plain nested-loop forward pass in double. `theta` is laid out like
// Model::parameters(); `x` is one sample, channels-last.
inline std::vector<double> reference_logits(const Model& model, std::span<const double> theta,
                                            std::vector<double> x) {
  std::size_t at = 0;
  for (std::size_t li = 0; li < model.num_layers(); ++li) {
    const Layer& l = model.layer(li);
    const Shape& in = model.layer_input_shape(li);
    const Shape& out = model.layer_output_shape(li);
    const double* w = theta.data() + at;
    const double* b = w + l.weights.size();
    at += l.parameter_count();
    std::vector<double> y(shape_product(out), 0.0);
    switch (l.kind) {
      case LayerKind::kDense: {
        const std::size_t n_in = x.size();
        for (std::size_t o = 0; o < y.size(); ++o) {
          double s = b[o];
          for (std::size_t i = 0; i < n_in; ++i) s += w[o * n_in + i] * x[i];
          y[o] = s;
        }
        break;
      }
      case LayerKind::kConv2D: {
        const std::size_t k = l.weights.dim(2), c_in = in[2], f_n = out[2];
        for (std::size_t r = 0; r < out[0]; ++r)
          for (std::size_t c = 0; c < out[1]; ++c)
            for (std::size_t f = 0; f < f_n; ++f) {
              double s = b[f];
              for (std::size_t ch = 0; ch < c_in; ++ch)
                for (std::size_t i = 0; i < k; ++i)
                  for (std::size_t j = 0; j < k; ++j) {
                    const std::size_t rr = r * l.stride + i, cc = c * l.stride + j;
                    s += w[((f * c_in + ch) * k + i) * k + j] * x[(rr * in[1] + cc) * c_in + ch];
                  }
              y[(r * out[1] + c) * f_n + f] = s;
            }
        break;
      }
      case LayerKind::kMaxPool2D: {
        const std::size_t ch_n = in[2];
        for (std::size_t r = 0; r < out[0]; ++r)
          for (std::size_t c = 0; c < out[1]; ++c)
            for (std::size_t ch = 0; ch < ch_n; ++ch) {
              double m = -INFINITY;
              for (std::size_t i = 0; i < l.window; ++i)
                for (std::size_t j = 0; j < l.window; ++j) {
                  const std::size_t rr = r * l.stride + i, cc = c * l.stride + j;
                  m = std::max(m, x[(rr * in[1] + cc) * ch_n + ch]);
                }
              y[(r * out[1] + c) * ch_n + ch] = m;
            }
        break;
      }
      case LayerKind::kFlatten:
        y = x;
        break;
    }
    if (l.activation == Activation::kReLU) {
      for (double& v : y) v = std::max(v, 0.0);
    }
    x = std::move(y);
  }
  return x;
}

// Mean softmax cross-entropy of the batch [B] + input_shape.
inline double reference_loss(const Model& model, std::span<const double> theta,
                             const Tensor& batch, std::span<const int> labels) {
  const std::size_t per = batch.size() / batch.dim(0);
  double total = 0;
  for (std::size_t n = 0; n < batch.dim(0); ++n) {
    std::vector<double> x(batch.data() + n * per, batch.data() + (n + 1) * per);
    const auto z = reference_logits(model, theta, std::move(x));
    const double m = *std::max_element(z.begin(), z.end());
    double s = 0;
    for (double v : z) s += std::exp(v - m);
    total += std::log(s) + m - z[static_cast<std::size_t>(labels[n])];
  }
  return total / double(batch.dim(0));
}

// Central differences of reference_loss w.r.t. every parameter.
inline std::vector<double> numeric_gradient(const Model& model, const Tensor& batch,
                                            std::span<const int> labels, double h = 1e-6) {
  const auto p = model.parameters();
  std::vector<double> theta(p.begin(), p.end());
  std::vector<double> g(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double keep = theta[i];
    theta[i] = keep + h;
    const double up = reference_loss(model, theta, batch, labels);
    theta[i] = keep - h;
    const double down = reference_loss(model, theta, batch, labels);
    theta[i] = keep;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

}  // namespace wforge::oracle
