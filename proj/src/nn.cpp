// SPDX-License-Identifier: Apache-2.0
#include "weightforge/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "weightforge/error.hpp"
#include "weightforge/parallel.hpp"
#include "weightforge/simd/kernels.hpp"

namespace wforge {
namespace {

void check_batch(const Model& model, const Tensor& batch) {
  const Shape& in = model.input_shape();
  bool ok = batch.rank() == in.size() + 1;
  for (std::size_t i = 0; ok && i < in.size(); ++i) ok = batch.dim(i + 1) == in[i];
  if (!ok) {
    throw ShapeError("batch shape " + shape_string(batch.shape()) +
                     " does not match [B]+" + shape_string(in));
  }
}

Shape batched(std::size_t b, const Shape& s) {
  Shape out{b};
  out.insert(out.end(), s.begin(), s.end());
  return out;
}

void relu_inplace(Tensor& t) {
  for (Scalar& v : t.values()) v = v > Scalar(0) ? v : Scalar(0);
}

// cols[p, (c*k + ky)*k + kx] for output position p = oy*wo + ox.
void im2col(const Scalar* x, std::size_t w, std::size_t c, std::size_t k,
            std::size_t stride, std::size_t ho, std::size_t wo, Scalar* cols) {
  const std::size_t kk = c * k * k;
  for (std::size_t oy = 0; oy < ho; ++oy) {
    for (std::size_t ox = 0; ox < wo; ++ox) {
      Scalar* row = cols + (oy * wo + ox) * kk;
      for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t ky = 0; ky < k; ++ky) {
          const Scalar* src = x + ((oy * stride + ky) * w + ox * stride) * c + ch;
          Scalar* dst = row + (ch * k + ky) * k;
          for (std::size_t kx = 0; kx < k; ++kx) dst[kx] = src[kx * c];
        }
      }
    }
  }
}

void col2im_acc(const Scalar* cols, std::size_t w, std::size_t c, std::size_t k,
                std::size_t stride, std::size_t ho, std::size_t wo, Scalar* dx) {
  const std::size_t kk = c * k * k;
  for (std::size_t oy = 0; oy < ho; ++oy) {
    for (std::size_t ox = 0; ox < wo; ++ox) {
      const Scalar* row = cols + (oy * wo + ox) * kk;
      for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t ky = 0; ky < k; ++ky) {
          Scalar* dst = dx + ((oy * stride + ky) * w + ox * stride) * c + ch;
          const Scalar* src = row + (ch * k + ky) * k;
          for (std::size_t kx = 0; kx < k; ++kx) dst[kx * c] += src[kx];
        }
      }
    }
  }
}

Tensor dense_forward(const Layer& l, const Tensor& x, std::size_t b) {
  const std::size_t out = l.weights.dim(0);
  const std::size_t in = l.weights.dim(1);
  Tensor y({b, out});
  simd::active().gemm_abt(b, out, in, x.data(), l.weights.data(), y.data());
  for (std::size_t i = 0; i < b; ++i) {
    Scalar* row = y.data() + i * out;
    for (std::size_t j = 0; j < out; ++j) row[j] += l.bias[j];
  }
  return y;
}

Tensor conv_forward(const Layer& l, const Tensor& x, const Shape& in_shape,
                    const Shape& out_shape, std::size_t b) {
  const std::size_t w = in_shape[1], c = in_shape[2];
  const std::size_t k = l.weights.dim(2);
  const std::size_t ho = out_shape[0], wo = out_shape[1], f = out_shape[2];
  const std::size_t positions = ho * wo, kk = c * k * k;
  Tensor y(batched(b, out_shape));
  std::vector<Scalar> cols(positions * kk);
  const std::size_t in_stride = shape_product(in_shape);
  const std::size_t out_stride = positions * f;
  for (std::size_t s = 0; s < b; ++s) {
    im2col(x.data() + s * in_stride, w, c, k, l.stride, ho, wo, cols.data());
    Scalar* out = y.data() + s * out_stride;
    simd::active().gemm_abt(positions, f, kk, cols.data(), l.weights.data(), out);
    for (std::size_t p = 0; p < positions; ++p) {
      for (std::size_t j = 0; j < f; ++j) out[p * f + j] += l.bias[j];
    }
  }
  return y;
}

Tensor pool_forward(const Layer& l, const Tensor& x, const Shape& in_shape,
                    const Shape& out_shape, std::size_t b) {
  const std::size_t w = in_shape[1], c = in_shape[2];
  const std::size_t ho = out_shape[0], wo = out_shape[1];
  Tensor y(batched(b, out_shape));
  const std::size_t in_stride = shape_product(in_shape);
  const std::size_t out_stride = shape_product(out_shape);
  for (std::size_t s = 0; s < b; ++s) {
    const Scalar* src = x.data() + s * in_stride;
    Scalar* dst = y.data() + s * out_stride;
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) {
        for (std::size_t ch = 0; ch < c; ++ch) {
          Scalar m = -std::numeric_limits<Scalar>::infinity();
          for (std::size_t dy = 0; dy < l.window; ++dy) {
            for (std::size_t dx = 0; dx < l.window; ++dx) {
              m = std::max(m, src[((oy * l.stride + dy) * w + ox * l.stride + dx) * c + ch]);
            }
          }
          dst[(oy * wo + ox) * c + ch] = m;
        }
      }
    }
  }
  return y;
}

Tensor layer_forward(const Model& model, std::size_t i, const Tensor& x) {
  const Layer& l = model.layer(i);
  const std::size_t b = x.dim(0);
  const Shape& in_shape = model.layer_input_shape(i);
  const Shape& out_shape = model.layer_output_shape(i);
  Tensor y;
  switch (l.kind) {
    case LayerKind::kDense: y = dense_forward(l, x, b); break;
    case LayerKind::kConv2D: y = conv_forward(l, x, in_shape, out_shape, b); break;
    case LayerKind::kMaxPool2D: y = pool_forward(l, x, in_shape, out_shape, b); break;
    case LayerKind::kFlatten: y = x.reshaped(batched(b, out_shape)); break;
  }
  if (l.activation == Activation::kReLU) relu_inplace(y);
  return y;
}

// Gradient w.r.t. layer input given gradient w.r.t. its post-activation
// output. Accumulates parameter gradients into `grad` when requested.
Tensor layer_backward(const Model& model, std::size_t i, const Tensor& x,
                      const Tensor& y, Tensor dy, LayerGradient* grad,
                      bool need_input) {
  const Layer& l = model.layer(i);
  const std::size_t b = x.dim(0);
  const Shape& in_shape = model.layer_input_shape(i);
  const Shape& out_shape = model.layer_output_shape(i);
  if (l.activation == Activation::kReLU) {
    for (std::size_t j = 0; j < dy.size(); ++j) {
      if (!(y[j] > Scalar(0))) dy[j] = 0;
    }
  }
  const simd::KernelTable& k = simd::active();
  Tensor dx;
  switch (l.kind) {
    case LayerKind::kDense: {
      const std::size_t out = l.weights.dim(0), in = l.weights.dim(1);
      if (grad != nullptr) {
        grad->weights = Tensor(l.weights.shape());
        grad->bias = Tensor(l.bias.shape());
        k.gemm_atb_acc(out, in, b, dy.data(), x.data(), grad->weights.data());
        for (std::size_t s = 0; s < b; ++s) {
          for (std::size_t j = 0; j < out; ++j) grad->bias[j] += dy[s * out + j];
        }
      }
      if (need_input) {
        dx = Tensor(x.shape());
        k.gemm_ab_acc(b, in, out, dy.data(), l.weights.data(), dx.data());
      }
      break;
    }
    case LayerKind::kConv2D: {
      const std::size_t w = in_shape[1], c = in_shape[2];
      const std::size_t kernel = l.weights.dim(2);
      const std::size_t ho = out_shape[0], wo = out_shape[1], f = out_shape[2];
      const std::size_t positions = ho * wo, kk = c * kernel * kernel;
      const std::size_t in_stride = shape_product(in_shape);
      std::vector<Scalar> cols(positions * kk);
      std::vector<Scalar> dcols(positions * kk);
      if (grad != nullptr) {
        grad->weights = Tensor(l.weights.shape());
        grad->bias = Tensor(l.bias.shape());
      }
      if (need_input) dx = Tensor(x.shape());
      for (std::size_t s = 0; s < b; ++s) {
        const Scalar* g = dy.data() + s * positions * f;
        if (grad != nullptr) {
          im2col(x.data() + s * in_stride, w, c, kernel, l.stride, ho, wo, cols.data());
          k.gemm_atb_acc(f, kk, positions, g, cols.data(), grad->weights.data());
          for (std::size_t p = 0; p < positions; ++p) {
            for (std::size_t j = 0; j < f; ++j) grad->bias[j] += g[p * f + j];
          }
        }
        if (need_input) {
          std::fill(dcols.begin(), dcols.end(), Scalar(0));
          k.gemm_ab_acc(positions, kk, f, g, l.weights.data(), dcols.data());
          col2im_acc(dcols.data(), w, c, kernel, l.stride, ho, wo,
                     dx.data() + s * in_stride);
        }
      }
      break;
    }
    case LayerKind::kMaxPool2D: {
      if (!need_input) break;
      const std::size_t w = in_shape[1], c = in_shape[2];
      const std::size_t ho = out_shape[0], wo = out_shape[1];
      const std::size_t in_stride = shape_product(in_shape);
      const std::size_t out_stride = shape_product(out_shape);
      dx = Tensor(x.shape());
      for (std::size_t s = 0; s < b; ++s) {
        const Scalar* src = x.data() + s * in_stride;
        Scalar* dst = dx.data() + s * in_stride;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          for (std::size_t ox = 0; ox < wo; ++ox) {
            for (std::size_t ch = 0; ch < c; ++ch) {
              std::size_t best = 0;
              Scalar m = -std::numeric_limits<Scalar>::infinity();
              for (std::size_t ddy = 0; ddy < l.window; ++ddy) {
                for (std::size_t ddx = 0; ddx < l.window; ++ddx) {
                  const std::size_t at =
                      ((oy * l.stride + ddy) * w + ox * l.stride + ddx) * c + ch;
                  if (src[at] > m) {
                    m = src[at];
                    best = at;
                  }
                }
              }
              dst[best] += dy[s * out_stride + (oy * wo + ox) * c + ch];
            }
          }
        }
      }
      break;
    }
    case LayerKind::kFlatten:
      if (need_input) dx = dy.reshaped(x.shape());
      break;
  }
  return dx;
}

}  // namespace

ForwardTrace forward(const Model& model, const Tensor& batch, const LayerHook& hook) {
  check_batch(model, batch);
  ForwardTrace trace;
  trace.activations.reserve(model.num_layers());
  for (std::size_t i = 0; i < model.num_layers(); ++i) {
    const Tensor& x = i == 0 ? batch : trace.activations.back();
    Tensor y = layer_forward(model, i, x);
    if (hook) hook(i, y);
    trace.activations.push_back(std::move(y));
  }
  trace.logits = trace.activations.back();
  return trace;
}

Tensor forward_to(const Model& model, const Tensor& batch, std::size_t layer,
                  const LayerHook& hook) {
  check_batch(model, batch);
  if (layer >= model.num_layers()) throw ShapeError("layer index out of range");
  Tensor cur;
  for (std::size_t i = 0; i <= layer; ++i) {
    Tensor y = layer_forward(model, i, i == 0 ? batch : cur);
    if (hook) hook(i, y);
    cur = std::move(y);
  }
  return cur;
}

Tensor forward_range(const Model& model, const Tensor& input, std::size_t first,
                     std::size_t last, const LayerHook& hook) {
  if (first > last || last >= model.num_layers()) throw ShapeError("bad layer range");
  const Shape& expect = model.layer_input_shape(first);
  bool ok = input.rank() == expect.size() + 1;
  for (std::size_t i = 0; ok && i < expect.size(); ++i) ok = input.dim(i + 1) == expect[i];
  if (!ok) {
    throw ShapeError("input " + shape_string(input.shape()) + " does not feed layer " +
                     std::to_string(first));
  }
  Tensor cur = input;
  for (std::size_t i = first; i <= last; ++i) {
    Tensor y = layer_forward(model, i, cur);
    if (hook) hook(i, y);
    cur = std::move(y);
  }
  return cur;
}

Tensor forward_logits(const Model& model, const Tensor& batch, const LayerHook& hook) {
  return forward_to(model, batch, model.num_layers() - 1, hook);
}

std::vector<int> argmax_rows(const Tensor& logits) {
  const std::size_t rows = logits.dim(0);
  const std::size_t cols = logits.size() / rows;
  std::vector<int> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const Scalar* row = logits.data() + r * cols;
    std::size_t best = 0;
    for (std::size_t c = 1; c < cols; ++c) {
      if (row[c] > row[best]) best = c;
    }
    out[r] = static_cast<int>(best);
  }
  return out;
}

std::vector<int> predict(const Model& model, const Tensor& images,
                         const LayerHook& hook, std::size_t chunk) {
  check_batch(model, images);
  const std::size_t n = images.dim(0);
  chunk = std::max<std::size_t>(chunk, 1);
  const std::size_t blocks = (n + chunk - 1) / chunk;
  std::vector<int> out(n);
  parallel_for(blocks, 1, [&](std::size_t b0, std::size_t b1) {
    for (std::size_t b = b0; b < b1; ++b) {
      const std::size_t begin = b * chunk, end = std::min(n, begin + chunk);
      const std::vector<int> p =
          argmax_rows(forward_logits(model, images.slice_rows(begin, end), hook));
      std::copy(p.begin(), p.end(), out.begin() + static_cast<std::ptrdiff_t>(begin));
    }
  });
  return out;
}

double softmax_cross_entropy(const Tensor& logits, std::span<const int> labels,
                             Tensor* grad) {
  const std::size_t rows = logits.dim(0);
  const std::size_t cols = logits.size() / rows;
  if (labels.size() != rows) {
    throw ShapeError("label count " + std::to_string(labels.size()) +
                     " does not match batch " + std::to_string(rows));
  }
  if (grad != nullptr) *grad = Tensor(logits.shape());
  double total = 0;
  std::vector<double> p(cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const int y = labels[r];
    if (y < 0 || static_cast<std::size_t>(y) >= cols) {
      throw ShapeError("label " + std::to_string(y) + " outside [0," +
                       std::to_string(cols) + ")");
    }
    const Scalar* row = logits.data() + r * cols;
    double m = row[0];
    for (std::size_t c = 1; c < cols; ++c) m = std::max(m, double(row[c]));
    double z = 0;
    for (std::size_t c = 0; c < cols; ++c) {
      p[c] = std::exp(double(row[c]) - m);
      z += p[c];
    }
    total += std::log(z) + m - double(row[y]);
    if (grad != nullptr) {
      Scalar* g = grad->data() + r * cols;
      for (std::size_t c = 0; c < cols; ++c) {
        const double prob = p[c] / z - (static_cast<int>(c) == y ? 1.0 : 0.0);
        g[c] = static_cast<Scalar>(prob / double(rows));
      }
    }
  }
  return total / double(rows);
}

Gradients backpropagate(const Model& model, const Tensor& batch,
                        const ForwardTrace& trace, std::size_t from,
                        const Tensor& seed, BackwardOptions opts) {
  if (from >= model.num_layers() || trace.activations.size() != model.num_layers()) {
    throw ShapeError("backpropagate: bad layer index or trace");
  }
  if (seed.shape() != trace.activations[from].shape()) {
    throw ShapeError("backpropagate: seed shape " + shape_string(seed.shape()) +
                     " does not match activation " +
                     shape_string(trace.activations[from].shape()));
  }
  Gradients g;
  g.layers.resize(model.num_layers());
  Tensor dy = seed;
  for (std::size_t i = from + 1; i-- > 0;) {
    const Layer& l = model.layer(i);
    const Tensor& x = i == 0 ? batch : trace.activations[i - 1];
    LayerGradient* lg = opts.parameters && l.has_parameters() ? &g.layers[i] : nullptr;
    const bool need_input = i > 0 || opts.input;
    Tensor dx = layer_backward(model, i, x, trace.activations[i], std::move(dy), lg,
                               need_input);
    if (i == 0) {
      if (opts.input) g.input = std::move(dx);
      break;
    }
    dy = std::move(dx);
  }
  return g;
}

Gradients backward(const Model& model, const Tensor& batch,
                   std::span<const int> labels, BackwardOptions opts) {
  ForwardTrace trace = forward(model, batch);
  Tensor dlogits;
  const double loss = softmax_cross_entropy(trace.logits, labels, &dlogits);
  Gradients g = backpropagate(model, batch, trace, model.num_layers() - 1,
                              dlogits, opts);
  g.loss = loss;
  return g;
}

std::vector<Scalar> flatten_gradients(const Model& model, const Gradients& g) {
  std::vector<Scalar> out;
  out.reserve(model.parameter_count());
  for (std::size_t i = 0; i < model.num_layers(); ++i) {
    const Layer& l = model.layer(i);
    if (!l.has_parameters()) continue;
    const LayerGradient& lg = g.layers.at(i);
    if (lg.weights.size() != l.weights.size() || lg.bias.size() != l.bias.size()) {
      throw ShapeError("gradient missing for layer " + std::to_string(i));
    }
    out.insert(out.end(), lg.weights.values().begin(), lg.weights.values().end());
    out.insert(out.end(), lg.bias.values().begin(), lg.bias.values().end());
  }
  return out;
}

}  // namespace wforge
