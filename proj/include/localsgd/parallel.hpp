#pragma once

#include <cstddef>
#include <functional>

namespace localsgd {

// Threads to use for independent jobs: LOCALSGD_THREADS when set and positive,
// otherwise the hardware concurrency.
std::size_t worker_threads();

// Runs body(i) for i in [0, count) on up to `threads` threads. Each index runs
// exactly once; callers write results into per-index slots so the outcome does
// not depend on scheduling. The first exception thrown is rethrown.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body,
                  std::size_t threads = worker_threads());

}  // namespace localsgd
