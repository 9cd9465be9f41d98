#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace randctl::detail {

/// Worker count: RANDCTL_THREADS if set, else the hardware concurrency.
inline unsigned worker_count() {
    if (const char* env = std::getenv("RANDCTL_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v >= 1) {
            return static_cast<unsigned>(v);
        }
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Calls body(i) for i in [0, n) on contiguous chunks. Results must be
/// written to per-index slots so the outcome does not depend on scheduling.
template <class Body>
void parallel_for(std::size_t n, Body&& body, std::size_t min_chunk = 64) {
    const std::size_t workers = std::min<std::size_t>(worker_count(), (n + min_chunk - 1) / std::max<std::size_t>(min_chunk, 1));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) {
            body(i);
        }
        return;
    }
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> threads;
    threads.reserve(workers);
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t lo = w * chunk;
        const std::size_t hi = std::min(n, lo + chunk);
        if (lo >= hi) {
            break;
        }
        threads.emplace_back([&, lo, hi] {
            try {
                for (std::size_t i = lo; i < hi; ++i) {
                    body(i);
                }
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) {
                    failure = std::current_exception();
                }
            }
        });
    }
    for (auto& t : threads) {
        t.join();
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
}

} // namespace randctl::detail
