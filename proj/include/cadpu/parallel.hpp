#pragma once

#include <cstddef>
#include <functional>

namespace cadpu {

// Worker count honoring the CADPU_THREADS environment variable
// (unset or 0 = hardware concurrency).
std::size_t thread_cap();

// Runs fn(begin, end) over disjoint chunks of [0, n). Callers must only write
// to per-index output slots; reductions are done sequentially afterwards so
// results do not depend on the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace cadpu
