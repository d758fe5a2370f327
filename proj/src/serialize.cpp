// SPDX-License-Identifier: Apache-2.0
//
// File layout: "WFORGE01" | u64 LE header length | UTF-8 JSON header |
// parameter blobs (weights then bias, per layer, little-endian).
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include <json.hpp>

#include "weightforge/error.hpp"
#include "weightforge/zoo.hpp"

namespace wforge {
namespace {

using nlohmann::json;

constexpr char kMagic[9] = "WFORGE01";
constexpr std::size_t kMaxHeader = 1u << 24;

static_assert(std::endian::native == std::endian::little,
              "model blobs are written in host order; big-endian hosts need a swap");

std::string scalar_name() { return sizeof(Scalar) == 4 ? "float32" : "float64"; }

json header_of(const Model& m) {
  json layers = json::array();
  for (const Layer& l : m.layers()) {
    json j{{"kind", to_string(l.kind)}, {"activation", to_string(l.activation)}};
    if (l.kind == LayerKind::kConv2D || l.kind == LayerKind::kMaxPool2D) j["stride"] = l.stride;
    if (l.kind == LayerKind::kMaxPool2D) j["window"] = l.window;
    if (l.has_parameters()) {
      j["weights_shape"] = l.weights.shape();
      j["bias_shape"] = l.bias.shape();
    }
    layers.push_back(std::move(j));
  }
  return json{{"format_version", kModelFormatVersion},
              {"scalar", scalar_name()},
              {"input_shape", m.input_shape()},
              {"num_classes", m.num_classes()},
              {"layers", std::move(layers)},
              {"provenance",
               {{"training_seed", m.provenance.training_seed},
                {"dataset_id", m.provenance.dataset_id},
                {"attack_lineage", m.provenance.attack_lineage}}}};
}

LayerKind kind_from(const std::string& s, std::size_t off) {
  if (s == "dense") return LayerKind::kDense;
  if (s == "conv2d") return LayerKind::kConv2D;
  if (s == "maxpool2d") return LayerKind::kMaxPool2D;
  if (s == "flatten") return LayerKind::kFlatten;
  throw ParseError("unknown layer kind '" + s + "'", off);
}

}  // namespace

void save_model(const Model& model, std::ostream& out) {
  const std::string header = header_of(model).dump();
  const std::uint64_t len = header.size();
  out.write(kMagic, 8);
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const Layer& l : model.layers()) {
    out.write(reinterpret_cast<const char*>(l.weights.data()),
              static_cast<std::streamsize>(l.weights.size() * sizeof(Scalar)));
    out.write(reinterpret_cast<const char*>(l.bias.data()),
              static_cast<std::streamsize>(l.bias.size() * sizeof(Scalar)));
  }
  if (!out) throw Error("failed writing model");
}

void save_model(const Model& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  save_model(model, out);
}

Model parse_model(const std::vector<std::uint8_t>& b) {
  if (b.size() < 8) throw ParseError("truncated magic", b.size());
  if (std::memcmp(b.data(), "10EGROFW", 8) == 0 || std::memcmp(b.data(), "ROFWEG10", 8) == 0) {
    throw ParseError("magic is byte-swapped; file was written with foreign endianness", 0);
  }
  for (std::size_t i = 0; i < 8; ++i) {
    if (b[i] != static_cast<std::uint8_t>(kMagic[i])) throw ParseError("bad magic", i);
  }
  if (b.size() < 16) throw ParseError("truncated header length", b.size());
  std::uint64_t len = 0;
  std::memcpy(&len, b.data() + 8, 8);
  if (len == 0 || len > kMaxHeader) {
    throw ParseError("implausible header length " + std::to_string(len), 8);
  }
  if (b.size() < 16 + len) throw ParseError("truncated header", b.size());
  json h;
  try {
    h = json::parse(b.begin() + 16, b.begin() + 16 + static_cast<std::ptrdiff_t>(len));
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("header is not valid JSON: ") + e.what(), 16 + e.byte);
  }
  std::size_t blob = 16 + len;
  try {
    const auto version = h.at("format_version").get<std::uint32_t>();
    if (version != kModelFormatVersion) {
      throw ParseError("unsupported format_version " + std::to_string(version), 16);
    }
    const std::string scalar = h.at("scalar").get<std::string>();
    if (scalar != "float32" && scalar != "float64") {
      throw ParseError("unknown scalar type " + scalar, 16);
    }
    const std::size_t width = scalar == "float32" ? 4 : 8;
    if (width > sizeof(Scalar)) {
      throw ParseError("file stores " + scalar + " but this build uses " + scalar_name(), 16);
    }
    std::vector<Layer> layers;
    for (const json& j : h.at("layers")) {
      Layer l;
      l.kind = kind_from(j.at("kind").get<std::string>(), 16);
      l.activation = j.at("activation").get<std::string>() == "relu" ? Activation::kReLU
                                                                       : Activation::kNone;
      l.stride = j.value("stride", std::size_t{1});
      l.window = j.value("window", std::size_t{0});
      if (l.has_parameters()) {
        auto read = [&](const Shape& shape) {
          const std::size_t n = shape_product(shape);
          if (b.size() - blob < n * width) throw ParseError("truncated parameter blob", b.size());
          std::vector<Scalar> v(n);
          for (std::size_t i = 0; i < n; ++i, blob += width) {
            if (width == 4) {
              float f;
              std::memcpy(&f, b.data() + blob, 4);
              v[i] = static_cast<Scalar>(f);
            } else {
              double d;
              std::memcpy(&d, b.data() + blob, 8);
              v[i] = static_cast<Scalar>(d);
            }
          }
          return Tensor(shape, std::move(v));
        };
        l.weights = read(j.at("weights_shape").get<Shape>());
        l.bias = read(j.at("bias_shape").get<Shape>());
      }
      layers.push_back(std::move(l));
    }
    if (blob != b.size()) throw ParseError("trailing bytes after parameters", blob);
    Model m(h.at("input_shape").get<Shape>(), h.at("num_classes").get<std::size_t>(),
            std::move(layers));
    const json& p = h.at("provenance");
    m.provenance.training_seed = p.at("training_seed").get<std::uint64_t>();
    m.provenance.dataset_id = p.at("dataset_id").get<std::string>();
    m.provenance.attack_lineage = p.at("attack_lineage").get<std::vector<std::string>>();
    return m;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed header: ") + e.what(), 16);
  } catch (const ShapeError& e) {
    throw ParseError(std::string("inconsistent architecture: ") + e.what(), 16);
  }
}

Model load_model(std::istream& in) {
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), {});
  return parse_model(bytes);
}

Model load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return load_model(in);
}

}  // namespace wforge
