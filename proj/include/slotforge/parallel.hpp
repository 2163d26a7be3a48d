#pragma once

#include <cstddef>
#include <functional>

namespace slotforge {

/// Resolves a worker count: `requested` if nonzero, else SLOTFORGE_THREADS,
/// else the number of hardware threads. Always at least 1.
std::size_t worker_count(std::size_t requested = 0);

/// Runs fn(0..n-1) on up to `workers` threads. Each index runs exactly once;
/// the exception of the lowest failing index is rethrown.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

}  // namespace slotforge
