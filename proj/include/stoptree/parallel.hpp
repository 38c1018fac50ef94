#pragma once
#include <algorithm>
#include <functional>
#include <thread>
#include <vector>

namespace stoptree {

// Static block partition of [0, count) over at most `threads` workers.
// Results must be written to preallocated slots so the outcome is
// independent of scheduling.
inline void parallel_for(int count, int threads, const std::function<void(int)>& body) {
    if (count <= 0) return;
    threads = std::max(1, std::min(threads, count));
    if (threads == 1) {
        for (int i = 0; i < count; ++i) body(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(threads));
    const int chunk = (count + threads - 1) / threads;
    for (int w = 0; w < threads; ++w) {
        const int lo = w * chunk;
        const int hi = std::min(count, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &body] {
            for (int i = lo; i < hi; ++i) body(i);
        });
    }
    for (auto& t : pool) t.join();
}

inline int default_threads() {
    const unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}

} // namespace stoptree
