#include "heracles/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <thread>
#include <vector>

namespace heracles {

namespace {

int threads_from_env() {
    if (const char* env = std::getenv("HERACLES_THREADS")) {
        int n = std::atoi(env);
        if (n > 0) return n;
    }
    return 1;
}

std::atomic<int> g_threads{threads_from_env()};

}  // namespace

int worker_threads() { return g_threads.load(); }
void set_worker_threads(int n) { g_threads.store(std::max(1, n)); }

void parallel_for(std::int64_t n, std::int64_t min_chunk, const std::function<void(std::int64_t, std::int64_t)>& fn) {
    if (n <= 0) return;
    auto workers = static_cast<std::int64_t>(worker_threads());
    workers = std::min(workers, std::max<std::int64_t>(1, n / std::max<std::int64_t>(1, min_chunk)));
    if (workers <= 1) {
        fn(0, n);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers - 1));
    std::int64_t chunk = (n + workers - 1) / workers;
    for (std::int64_t w = 1; w < workers; ++w) {
        std::int64_t begin = w * chunk;
        std::int64_t end = std::min(n, begin + chunk);
        if (begin >= end) break;
        pool.emplace_back([&fn, begin, end] { fn(begin, end); });
    }
    fn(0, std::min(n, chunk));
    for (auto& t : pool) t.join();
}

}  // namespace heracles
