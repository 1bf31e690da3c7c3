#pragma once

#include <cstdint>
#include <functional>

namespace heracles {

/// Worker cap: HERACLES_THREADS when set and positive, else 1.
int worker_threads();
void set_worker_threads(int n);

/// Runs fn(begin, end) over contiguous chunks of [0, n). Each index is owned
/// by exactly one chunk, so results do not depend on the worker count.
void parallel_for(std::int64_t n, std::int64_t min_chunk, const std::function<void(std::int64_t, std::int64_t)>& fn);

}  // namespace heracles
