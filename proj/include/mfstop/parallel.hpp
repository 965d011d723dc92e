#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace mfstop {

// Runs fn(i) for i in [0, count) on up to `workers` threads. Each index writes only
// its own output slot, so results are identical for any worker count. The first
// exception (lowest index) is rethrown on the calling thread.
template <class Fn>
void parallel_for(std::size_t count, unsigned workers, Fn&& fn) {
    if (count == 0) return;
    std::size_t nthreads = std::min<std::size_t>(std::max(1u, workers), count);
    if (nthreads == 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(count);
    std::vector<std::thread> pool;
    pool.reserve(nthreads);
    for (std::size_t w = 0; w < nthreads; ++w)
        pool.emplace_back([&, w] {
            for (std::size_t i = w; i < count; i += nthreads) {
                try {
                    fn(i);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        });
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

// Fixed-order pairwise sum (the association tree depends only on the length).
template <class It>
double pairwise_sum(It first, std::size_t n) {
    if (n <= 8) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += first[i];
        return s;
    }
    std::size_t h = n / 2;
    return pairwise_sum(first, h) + pairwise_sum(first + h, n - h);
}

}  // namespace mfstop
