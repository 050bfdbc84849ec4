#pragma once

#include <cstddef>
#include <functional>

namespace dgecn {

// Worker count: hardware concurrency capped by DGECN_THREADS when set.
std::size_t thread_budget();

// Runs fn(i) for i in [0, n) on up to thread_budget() threads. Each index is
// visited exactly once; callers write results into per-index slots so the
// outcome does not depend on scheduling. The first exception is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace dgecn
