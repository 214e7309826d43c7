// Minimal chunked parallel_for. Workers write disjoint slots, so results are
// independent of the thread count; reductions stay in caller code, in fixed
// order.
#pragma once

#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace aqm {

inline int default_thread_count() {
    if (const char* env = std::getenv("ACTIONQM_THREADS")) {
        int v = std::atoi(env);
        if (v >= 1) return v;
    }
    unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : int(hc);
}

// fn(begin, end) over [0,n) split into contiguous chunks.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn,
                         int threads = 0) {
    if (threads <= 0) threads = default_thread_count();
    if (threads == 1 || n < 64) {
        fn(0, n);
        return;
    }
    std::size_t nthreads = std::min<std::size_t>(threads, n);
    std::size_t chunk = (n + nthreads - 1) / nthreads;
    std::vector<std::thread> pool;
    pool.reserve(nthreads);
    for (std::size_t t = 0; t < nthreads; ++t) {
        std::size_t b = t * chunk, e = std::min(n, b + chunk);
        if (b >= e) break;
        pool.emplace_back([&fn, b, e] { fn(b, e); });
    }
    for (auto& th : pool) th.join();
}

} // namespace aqm
