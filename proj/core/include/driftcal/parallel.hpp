#pragma once

#include <cstddef>
#include <functional>

namespace driftcal {

// Thread cap honoring the DRIFTCAL_THREADS environment variable
// (defaults to the hardware concurrency).
unsigned thread_budget();

// Runs fn(i) for i in [0, n) across up to thread_budget() threads.
// Callers must write only to per-index slots; any reduction over the
// results has to happen afterwards, in ascending index order, so the
// outcome does not depend on scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace driftcal
