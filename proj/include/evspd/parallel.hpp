#pragma once

#include <cstddef>
#include <thread>
#include <vector>

namespace evspd {

// Run fn(i) for i in [0, n) on up to n_threads workers with a static
// partition. Each index is owned by exactly one worker, so callers can
// write into preallocated per-index slots without locking and the result
// is identical for any thread count.
template <typename Fn>
void parallel_for(std::size_t n, unsigned n_threads, Fn&& fn) {
    if (n == 0) return;
    unsigned workers = n_threads == 0 ? std::thread::hardware_concurrency() : n_threads;
    if (workers <= 1 || n == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    if (workers > n) workers = static_cast<unsigned>(n);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            for (std::size_t i = w; i < n; i += workers) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

} // namespace evspd
