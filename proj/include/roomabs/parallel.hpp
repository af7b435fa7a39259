#pragma once

#include <cstddef>
#include <functional>

namespace roomabs {

// Process-wide worker count used by the parallel kernels. 1 means serial.
void set_thread_count(std::size_t n);
std::size_t thread_count();

// Runs body(i) for i in [0, n) across the worker pool. Each index runs exactly
// once; callers write results into per-index slots so the outcome does not
// depend on scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace roomabs
