#pragma once

#include <functional>
#include <thread>
#include <vector>

namespace sabr {

// Static contiguous partition of [0, n) over `workers` threads. Chunk
// boundaries depend only on (n, workers), so any per-chunk accumulation
// reduced in chunk order is deterministic for a fixed worker count.
inline void parallel_for(size_t n, int workers, const std::function<void(size_t, size_t, int)>& fn) {
    if (n == 0) return;
    if (workers < 1) workers = 1;
    if (static_cast<size_t>(workers) > n) workers = static_cast<int>(n);
    if (workers == 1) {
        fn(0, n, 0);
        return;
    }
    std::vector<std::thread> threads;
    threads.reserve(workers);
    const size_t base = n / workers, rem = n % workers;
    size_t begin = 0;
    for (int w = 0; w < workers; ++w) {
        const size_t len = base + (static_cast<size_t>(w) < rem ? 1 : 0);
        threads.emplace_back(fn, begin, begin + len, w);
        begin += len;
    }
    for (auto& t : threads) t.join();
}

}  // namespace sabr
