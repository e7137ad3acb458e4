#pragma once

#include <cstddef>
#include <functional>

namespace advunlearn {

/// Worker count for parallelizable scoring, read from ADVUNLEARN_THREADS
/// (default 1, clamped to [1, 64]).
std::size_t scoring_threads();

/// Runs fn(begin, end) over [0, n) split into contiguous chunks. Each index is
/// handled by exactly one call, so writes to per-index slots are race-free
/// and results do not depend on the thread count.
void parallel_for(std::size_t n, std::size_t chunk,
                  const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace advunlearn
