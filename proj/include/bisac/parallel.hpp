#pragma once

#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace bisac {

/// Worker count: BISAC_WORKERS overrides, default hardware concurrency.
inline int worker_count() {
    if (const char* env = std::getenv("BISAC_WORKERS")) {
        const int n = std::atoi(env);
        if (n >= 1) return n;
    }
    const unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}

/// Run fn(chunk_index) for chunk_index in [0, n_chunks) on a bounded pool.
/// Chunks own disjoint state; callers combine results in chunk order so the
/// outcome does not depend on scheduling.
inline void parallel_for_chunks(int n_chunks, const std::function<void(int)>& fn) {
    const int workers = std::min(worker_count(), n_chunks);
    if (workers <= 1) {
        for (int c = 0; c < n_chunks; ++c) fn(c);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&, w]() {
            for (int c = w; c < n_chunks; c += workers) fn(c);
        });
    for (auto& t : pool) t.join();
}

}  // namespace bisac
