#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace hedgegame {

/// Worker cap from HEDGEGAME_THREADS (0 or unset = hardware concurrency).
inline unsigned thread_count() {
    unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    const char* env = std::getenv("HEDGEGAME_THREADS");
    if (env == nullptr || *env == '\0') return hw;
    char* end = nullptr;
    long n = std::strtol(env, &end, 10);
    if (end == env || n < 0) return hw;
    return n == 0 ? hw : static_cast<unsigned>(n);
}

/**
 * Runs fn(i) for i in [0, n) on up to thread_count() workers with static
 * contiguous chunking. Callers write results into per-index slots, so the
 * outcome never depends on the number of workers.
 */
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn) {
    unsigned workers = static_cast<unsigned>(std::min<std::size_t>(thread_count(), n));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    std::size_t chunk = (n + workers - 1) / workers;
    for (unsigned w = 0; w < workers; ++w) {
        std::size_t lo = w * chunk;
        std::size_t hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([&, lo, hi] {
            try {
                for (std::size_t i = lo; i < hi; ++i) fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

}  // namespace hedgegame
