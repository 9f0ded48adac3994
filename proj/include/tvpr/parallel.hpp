#pragma once

#include <atomic>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace tvpr {

// Worker count for data-parallel loops. TVPR_THREADS overrides; 0 / unset
// falls back to the hardware count.
inline int thread_count() {
    if (const char* env = std::getenv("TVPR_THREADS")) {
        int n = std::atoi(env);
        if (n > 0) return n;
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

// Runs fn(begin, end) over fixed-size chunks of [0, n). Chunk boundaries
// depend only on `grain`, never on the worker count, and every chunk writes a
// disjoint output range, so results are identical for any TVPR_THREADS value.
template <typename Fn>
void parallel_for(std::int64_t n, std::int64_t grain, Fn&& fn) {
    if (n <= 0) return;
    const std::int64_t chunks = (n + grain - 1) / grain;
    int workers = thread_count();
    if (workers <= 1 || chunks <= 1) {
        for (std::int64_t c = 0; c < chunks; ++c)
            fn(c * grain, std::min(n, (c + 1) * grain));
        return;
    }
    if (static_cast<std::int64_t>(workers) > chunks) workers = static_cast<int>(chunks);
    std::atomic<std::int64_t> next{0};
    auto worker = [&] {
        for (;;) {
            const std::int64_t c = next.fetch_add(1);
            if (c >= chunks) return;
            fn(c * grain, std::min(n, (c + 1) * grain));
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers) - 1);
    for (int t = 1; t < workers; ++t) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
}

} // namespace tvpr
