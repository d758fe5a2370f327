// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <atomic>
#include <cstdlib>
#include <vector>

#include "weightforge/parallel.hpp"
#include "weightforge/rng.hpp"

using namespace wforge;

TEST(Parallel, CoversRangeExactlyOnce) {
  for (std::size_t n : {0u, 1u, 7u, 1000u}) {
    std::vector<std::atomic<int>> hits(n);
    parallel_for(n, 3, [&](std::size_t b, std::size_t e) {
      for (std::size_t i = b; i < e; ++i) hits[i]++;
    });
    for (auto& h : hits) EXPECT_EQ(h.load(), 1);
  }
}

TEST(Parallel, ThreadCapFromEnvironment) {
  const char* old = std::getenv("WEIGHTFORGE_THREADS");
  const std::string keep = old ? old : "";
  setenv("WEIGHTFORGE_THREADS", "3", 1);
  EXPECT_EQ(worker_count(), 3u);
  setenv("WEIGHTFORGE_THREADS", "0", 1);
  EXPECT_GE(worker_count(), 1u);
  if (old) {
    setenv("WEIGHTFORGE_THREADS", keep.c_str(), 1);
  } else {
    unsetenv("WEIGHTFORGE_THREADS");
  }
}

TEST(Rng, NamedStreamsAreStableAndDistinct) {
  EXPECT_EQ(stream_seed(1, "train"), stream_seed(1, "train"));
  EXPECT_NE(stream_seed(1, "train"), stream_seed(1, "attack"));
  EXPECT_NE(stream_seed(1, "train"), stream_seed(2, "train"));
}
