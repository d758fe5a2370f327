// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace wforge {

using Rng = std::mt19937_64;

// Derives an independent seed for a named stream from a root seed, so that
// adding a consumer never shifts the randomness another stage sees.
std::uint64_t stream_seed(std::uint64_t root, std::string_view stream);

inline Rng make_rng(std::uint64_t root, std::string_view stream) {
  return Rng(stream_seed(root, stream));
}

}  // namespace wforge
