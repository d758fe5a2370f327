// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>

namespace wforge {

// Worker cap: WEIGHTFORGE_THREADS if set to a positive integer, otherwise the
// hardware concurrency (at least 1).
std::size_t worker_count();

// Splits [0, n) into contiguous chunks of at least `grain` items and runs
// fn(begin, end) on each, using up to worker_count() threads. Chunk
// boundaries depend only on n, grain and the worker count.
void parallel_for(std::size_t n, std::size_t grain,
                  const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace wforge
