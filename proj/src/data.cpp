// SPDX-License-Identifier: Apache-2.0
#include "weightforge/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>

#include "weightforge/error.hpp"
#include "weightforge/rng.hpp"

namespace wforge {

Shape Dataset::image_shape() const {
  return Shape(images.shape().begin() + 1, images.shape().end());
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  if (indices.empty()) throw Error("empty subset");
  const std::size_t stride = images.size() / size();
  Shape shape = images.shape();
  shape[0] = indices.size();
  std::vector<Scalar> data(indices.size() * stride);
  Dataset out;
  out.labels.resize(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::size_t at = indices[i];
    if (at >= size()) throw Error("subset index out of range");
    std::copy_n(images.data() + at * stride, stride, data.begin() + i * stride);
    out.labels[i] = labels[at];
  }
  out.images = Tensor(std::move(shape), std::move(data));
  out.num_classes = num_classes;
  out.id = id;
  return out;
}

Dataset Dataset::slice(std::size_t begin, std::size_t end) const {
  Dataset out;
  out.images = images.slice_rows(begin, end);
  out.labels.assign(labels.begin() + static_cast<std::ptrdiff_t>(begin),
                    labels.begin() + static_cast<std::ptrdiff_t>(end));
  out.num_classes = num_classes;
  out.id = id;
  return out;
}

Dataset Dataset::sample(std::size_t n, std::uint64_t seed) const {
  if (n == 0 || n > size()) throw Error("sample size out of range");
  std::vector<std::size_t> idx(size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(stream_seed(seed, "dataset-sample"));
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(n);
  return subset(idx);
}

void Dataset::validate() const {
  if (labels.empty()) throw Error("dataset is empty");
  if (images.rank() != 4 || images.dim(0) != labels.size()) {
    throw ShapeError("dataset images must be [N,H,W,C] with N labels");
  }
  for (Scalar v : images.values()) {
    if (!(v >= 0 && v <= 1)) throw Error("pixel outside [0,1]");
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) throw Error("label out of range");
  }
}

namespace {

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

std::uint32_t be32(std::span<const std::uint8_t> b, std::size_t at, const char* what) {
  if (at + 4 > b.size()) throw ParseError(std::string("truncated ") + what, b.size());
  return (std::uint32_t(b[at]) << 24) | (std::uint32_t(b[at + 1]) << 16) |
         (std::uint32_t(b[at + 2]) << 8) | std::uint32_t(b[at + 3]);
}

}  // namespace

Dataset parse_mnist_idx(std::span<const std::uint8_t> images,
                        std::span<const std::uint8_t> labels) {
  if (be32(images, 0, "image header") != 0x00000803u) {
    throw ParseError("image file magic is not 0x00000803", 0);
  }
  if (be32(labels, 0, "label header") != 0x00000801u) {
    throw ParseError("label file magic is not 0x00000801", 0);
  }
  const std::size_t n = be32(images, 4, "image header");
  const std::size_t rows = be32(images, 8, "image header");
  const std::size_t cols = be32(images, 12, "image header");
  const std::size_t nl = be32(labels, 4, "label header");
  if (n == 0 || rows == 0 || cols == 0) throw ParseError("zero image dimension", 4);
  if (nl != n) {
    throw ParseError("label count " + std::to_string(nl) + " differs from image count " +
                         std::to_string(n),
                     4);
  }
  const std::size_t pixels = n * rows * cols;
  if (images.size() - 16 < pixels) throw ParseError("truncated pixel data", images.size());
  if (labels.size() - 8 < n) throw ParseError("truncated label data", labels.size());

  Dataset d;
  std::vector<Scalar> data(pixels);
  for (std::size_t i = 0; i < pixels; ++i) {
    data[i] = static_cast<Scalar>(images[16 + i]) / Scalar(255);
  }
  d.images = Tensor({n, rows, cols, 1}, std::move(data));
  d.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t y = labels[8 + i];
    if (y >= 10) throw ParseError("label " + std::to_string(y) + " out of range", 8 + i);
    d.labels[i] = y;
  }
  d.num_classes = 10;
  d.id = "mnist";
  return d;
}

Dataset load_mnist_idx(const std::string& images_path, const std::string& labels_path) {
  const auto img = read_file(images_path);
  const auto lab = read_file(labels_path);
  Dataset d = parse_mnist_idx(img, lab);
  d.id = "mnist:" + std::to_string(d.size());
  return d;
}

Dataset synth_dataset(std::size_t num_classes, std::size_t n, std::uint64_t seed,
                      const SynthOptions& opts) {
  if (num_classes == 0 || n < num_classes) throw Error("synth_dataset needs n >= num_classes > 0");
  const std::size_t side = opts.side;
  const double pi = std::acos(-1.0);
  const double radius = side * 0.28;
  std::vector<std::vector<double>> centroid(num_classes, std::vector<double>(side * side));
  for (std::size_t c = 0; c < num_classes; ++c) {
    const double a = 2 * pi * double(c) / double(num_classes);
    const double cy = (side - 1) / 2.0 + radius * std::sin(a);
    const double cx = (side - 1) / 2.0 + radius * std::cos(a);
    for (std::size_t y = 0; y < side; ++y) {
      for (std::size_t x = 0; x < side; ++x) {
        const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
        centroid[c][y * side + x] =
            opts.amplitude * std::exp(-d2 / (2 * opts.blob_sigma * opts.blob_sigma));
      }
    }
  }
  Rng rng(stream_seed(seed, "synth"));
  std::normal_distribution<double> noise(0.0, opts.noise);
  Dataset d;
  std::vector<Scalar> data(n * side * side);
  d.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = i % num_classes;
    d.labels[i] = static_cast<int>(c);
    for (std::size_t p = 0; p < side * side; ++p) {
      const double v = centroid[c][p] + noise(rng);
      data[i * side * side + p] = static_cast<Scalar>(std::clamp(v, 0.0, 1.0));
    }
  }
  d.images = Tensor({n, side, side, 1}, std::move(data));
  d.num_classes = num_classes;
  d.id = "synth:" + std::to_string(num_classes) + ":" + std::to_string(n) + ":" +
         std::to_string(seed);
  return d;
}

}  // namespace wforge
