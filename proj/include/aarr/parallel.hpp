#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace aarr {

/// Worker count from AARR_THREADS, default 1.
inline std::size_t threads_from_env() {
    const char* s = std::getenv("AARR_THREADS");
    if (!s || !*s) return 1;
    try {
        return std::max<long>(1, std::stol(s));
    } catch (const std::exception&) {
        return 1;
    }
}

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Each index is
/// handled exactly once, so writes to slot i of a preallocated output keep
/// results in index order regardless of scheduling.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
    threads = std::min(threads, n);
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
            try {
                for (std::size_t i = t; i < n; i += threads) fn(i);
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace aarr
