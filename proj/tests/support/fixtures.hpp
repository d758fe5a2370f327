// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstring>
#include <random>

#include "weightforge/data.hpp"
#include "weightforge/rng.hpp"
#include "weightforge/zoo.hpp"

namespace wforge::testing {

inline bool bit_equal(const Model& a, const Model& b) {
  const auto pa = a.parameters(), pb = b.parameters();
  return a == b && pa.size() == pb.size() &&
         std::memcmp(pa.data(), pb.data(), pa.size() * sizeof(Scalar)) == 0;
}

inline Tensor random_tensor(Shape shape, std::uint64_t seed, double lo = -1, double hi = 1) {
  Tensor t(std::move(shape));
  Rng rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : t.values()) v = static_cast<Scalar>(u(rng));
  return t;
}

struct SynthWorld {
  Dataset train, test;
  Model fc;
};

// Small synthetic task with a trained FC model, built once per process.
inline const SynthWorld& synth_world() {
  static const SynthWorld w = [] {
    SynthWorld s{synth_dataset(4, 1200, 11), synth_dataset(4, 400, 12),
                 build_fc({28, 28, 1}, 24, 4, 13)};
    TrainConfig tc;
    tc.epochs = 4;
    tc.lr = 0.01;
    tc.seed = 14;
    train(s.fc, s.train, tc);
    return s;
  }();
  return w;
}

}  // namespace wforge::testing
